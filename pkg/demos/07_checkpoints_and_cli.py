# %% [markdown]
# # Checkpoints, run configs and the command line
#
# Everything the CLI does is available as functions; this walks through a
# tiny run end to end in a temporary directory.

# %%
import json
import subprocess
import sys
import tempfile
from pathlib import Path

from pelspeech.audio import SpectrogramConfig
from pelspeech.model import ModelConfig
from pelspeech.pel import AdapterConfig, ScopeSelector
from pelspeech.persistence import DataPaths, RunConfig, load_checkpoint
from pelspeech.train import HeadConfig, TrainConfig

work = Path(tempfile.mkdtemp())


def cli(*args):
    out = subprocess.run([sys.executable, "-m", "pelspeech.cli", *args], capture_output=True, text=True)
    print("$ pelspeech", " ".join(args), "\n" + out.stdout + out.stderr)


cli("synth-data", "--classes", "2", "--per-class", "8", "--dev-per-class", "4", "--test-per-class", "4",
    "--duration", "2", "--out", str(work / "data"))

# %%
run = RunConfig(
    model=ModelConfig(d_model=16, n_heads=2, encoder_layers=1, decoder_layers=1, vocab_size=24,
                      mel_bins=4, max_frames=10, n_language_tokens=8),
    spectrogram=SpectrogramConfig(sample_rate=2000, fft_size=512, hop=400, mel_bins=4, seconds=2),
    train=TrainConfig(base_lr=1e-2, epochs=3, batch_size=4, samples_per_class=8,
                      selector=ScopeSelector("full", "adapters_only"), adapter=AdapterConfig(4),
                      head=HeadConfig("map")),
    data=DataPaths("data/train_manifest.json", "data/dev_manifest.json", "data/test_manifest.json"),
    output_dir="run")
run.save(work / "config.json")
print((work / "config.json").read_text()[:300], "...")

# %%
cli("train", "--config", str(work / "config.json"))
cli("count-params", "--ckpt", str(work / "run" / "model.ckpt"), "--scope", "full:adapters_only")
cli("eval", "--ckpt", str(work / "run" / "model.ckpt"), "--data", str(work / "data"))

# %%
registry, manifest = load_checkpoint(work / "run" / "model.ckpt")
print(manifest["params"][:2])
print(json.dumps(manifest["provenance"], indent=1)[:400])
