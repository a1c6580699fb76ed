"""Acceptance gate: one recorded PASS/FAIL line per criterion.

Run alone with ``pytest tests/test_acceptance.py -v``; the lines are repeated
in the "acceptance criteria" block of the terminal summary.  The end-to-end
experiment dominates the runtime (several minutes on one core).
"""

import time
from collections import Counter

import numpy as np
import pytest

from pelspeech import autodiff as ad
from pelspeech.audio import DESK, AudioClip, SpectrogramConfig, SynthConfig, log_mel, synth_dialect
from pelspeech.autodiff import Tensor
from pelspeech.labelmap import LabelMap, dialect_probs, random_map
from pelspeech.model import SOT, ModelConfig, TransformerModel
from pelspeech.pel import (AdapterConfig, ReprogramDelta, ScopeSelector, attach_reprogram,
                           base_param_count, insert_adapters, resolve_scope)
from pelspeech.persistence import (OffsetConsistencyError, TruncatedBlobError, VersionMismatchError,
                                   load_checkpoint, load_model, save_checkpoint, save_model)
from pelspeech.saliency import SaliencyConfig, mask_diff, mass_fraction, model_prob_fn, occlusion_map
from pelspeech.train import (SOURCE_SYNTH, ClipDataset, Head, HeadConfig, TrainConfig, derive_rng,
                             evaluate_accuracy, make_epoch_plan, prepare_model, pretrain_backbone,
                             source_label_map, train, trainable_ratio, utility_score)

from conftest import check_grads

pytestmark = pytest.mark.acceptance

# (method, trainable count, printed ratio %, test accuracy %, printed utility)
REFERENCE_ROWS = [
    ("full fine-tuning", 71.8e6, 100.0, 93.34, 11.88),
    ("encoder fine-tuning", 18.9e6, 26.32, 95.01, 13.06),
    ("decoder fine-tuning", 52e6, 72.42, 93.75, 12.15),
    ("BitFit", 75.8e3, 0.10, 57.68, 11.82),
    ("encoder BitFit", 32.3e3, 0.04, 41.83, 9.28),
    ("decoder BitFit", 43.5e3, 0.06, 39.42, 8.50),
    ("input reprogramming", 240e3, 0.33, 27.91, 5.19),
    ("adapters-64", 642e3, 0.89, 89.47, 15.41),
    ("adapters-128", 1e6, 1.39, 91.50, 15.25),
    ("adapters-256", 1.8e6, 2.50, 93.15, 14.89),
]
BASE_TOTAL = 71.8e6

TINY = ModelConfig(d_model=8, n_heads=2, encoder_layers=1, decoder_layers=1, vocab_size=12,
                   mel_bins=4, max_frames=8, max_decoder_positions=4, n_language_tokens=5)
SMALL = ModelConfig(d_model=16, n_heads=2, encoder_layers=2, decoder_layers=1, vocab_size=24,
                    mel_bins=4, max_frames=10, n_language_tokens=8)
SMALL_SPEC = SpectrogramConfig(sample_rate=2000, fft_size=512, hop=400, mel_bins=4, seconds=2)

PAIRS = SynthConfig(layout="pairs", f_lo=150.0, f_hi=850.0, active_seconds=10.0)


# -- metric oracles -------------------------------------------------------------------------


def test_utility_score_oracle(criterion):
    errs = [abs(utility_score(acc, int(count)) - printed) for _, count, _, acc, printed in REFERENCE_ROWS]
    criterion("utility-score oracle (10 rows, +-0.02)", max(errs) <= 0.02, f"max |err| {max(errs):.4f}")


def test_trainable_ratio_oracle(criterion):
    errs = [abs(trainable_ratio(int(count), int(BASE_TOTAL)) - printed) for _, count, printed, _, _ in REFERENCE_ROWS]
    r256 = trainable_ratio(1_800_000, 71_800_000)
    ok = max(errs) <= 0.01 and 2.50 <= round(r256, 2) <= 2.51
    criterion("trainable-ratio oracle (+-0.01 pp)", ok, f"max |err| {max(errs):.4f} pp, 1.8M/71.8M = {r256:.3f}%")


# -- gradient suite ---------------------------------------------------------------------------


def _p(rng, *shape, positive=False):
    data = rng.uniform(0.5, 2.0, shape) if positive else rng.standard_normal(shape)
    return Tensor(data, requires_grad=True, dtype=np.float64)


def _simple(op, *shapes, positive=False):
    """A random linear functional of ``op`` turns it into a scalar loss."""

    def case(rng):
        ts = [_p(rng, *s, positive=positive) for s in shapes]
        c = rng.standard_normal(op(*ts).shape)
        return (lambda: (op(*ts) * c).sum()), ts
    return case


def _embedding_case(rng):
    w = _p(rng, 7, 5)
    ids = rng.integers(0, 7, size=(3, 4))
    c = rng.standard_normal((3, 4, 5))
    return (lambda: (ad.embedding(w, ids) * c).sum()), [w]


def _ce_case(rng):
    x = _p(rng, 6, 9)
    t = rng.integers(0, 9, 6)
    return (lambda: ad.cross_entropy(x, t)), [x]


def _nll_case(rng):
    x = _p(rng, 6, 9)
    t = rng.integers(0, 9, 6)
    return (lambda: ad.nll(ad.log_softmax(x), t)), [x]


def _conv_case(stride):
    def case(rng):
        x, w, b = _p(rng, 2, 3, 9), _p(rng, 4, 3, 3), _p(rng, 4)
        c = rng.standard_normal(ad.conv1d(x, w, b, stride=stride, padding=1).shape)
        return (lambda: (ad.conv1d(x, w, b, stride=stride, padding=1) * c).sum()), [x, w, b]
    return case


def _attention_case(causal, cross):
    def case(rng):
        m = TransformerModel.init(SMALL, rng).astype(np.float64)
        x = _p(rng, 2, 4, 16)
        src = _p(rng, 2, 5, 16) if cross else x
        name = "decoder.blocks.0.cross_attn" if cross else "decoder.blocks.0.attn"
        c = rng.standard_normal((2, 4, 16))
        params = [m.registry[f"{name}.{k}.weight"] for k in ("query", "key", "value", "out")]
        ts = [x, src] + params if cross else [x] + params
        return (lambda: (m._attention(x, src, name, causal) * c).sum()), ts
    return case


def _adapter_case(rng):
    m = TransformerModel.init(SMALL, rng).astype(np.float64)
    insert_adapters(m, AdapterConfig(4, up_init="small-random"), rng)
    names = [f"adapter.encoder.1.{a}.{b}" for a in ("down", "up") for b in ("weight", "bias")]
    for n in names:  # lift the up projection out of the near-zero init
        m.registry[n].data += 0.3 * rng.standard_normal(m.registry[n].shape)
    x = _p(rng, 2, 5, 16)
    c = rng.standard_normal((2, 5, 16))
    return (lambda: (m._adapter(x, "encoder", 1) * c).sum()), [x] + [m.registry[n] for n in names]


def _reprogram_case(rng):
    m = TransformerModel.init(TINY, rng).astype(np.float64)
    attach_reprogram(m, ReprogramDelta(0.3 * rng.standard_normal((4, 8))))
    delta = m.registry["reprogram.delta"]
    mel = rng.standard_normal((2, 4, 8))
    t = rng.integers(0, 12, 2)
    return (lambda: ad.cross_entropy(m.first_logits(mel), t)), [delta]


def _group_softmax_case(rng):
    lmap = random_map(3, 2, range(10), rng)
    x = _p(rng, 4, 10)
    c = rng.standard_normal((4, 3))
    return (lambda: (dialect_probs(x, lmap) * c).sum()), [x]


GRAD_CASES = {
    "add (broadcast)": _simple(lambda a, b: a + b, (3, 4), (4,)),
    "sub": _simple(lambda a, b: a - b, (2, 3), (2, 3)),
    "mul (broadcast)": _simple(lambda a, b: a * b, (3, 1, 4), (2, 4)),
    "div": _simple(lambda a, b: a / b, (3, 4), (3, 4), positive=True),
    "neg": _simple(lambda a: -a, (5,)),
    "exp": _simple(ad.exp, (3, 4)),
    "log": _simple(ad.log, (3, 4), positive=True),
    "tanh": _simple(ad.tanh, (3, 4)),
    "gelu": _simple(ad.gelu, (3, 4)),
    "reshape": _simple(lambda a: a.reshape(4, 3), (2, 6)),
    "transpose": _simple(lambda a: ad.transpose(a, (2, 0, 1)), (2, 3, 4)),
    "swapaxes": _simple(lambda a: ad.swapaxes(a, 0, 2), (2, 3, 4)),
    "getitem": _simple(lambda a: a[1:, [0, 2, 2]], (3, 4)),
    "concat": _simple(lambda a, b: ad.concat([a, b], axis=1), (2, 3), (2, 2)),
    "embedding": _embedding_case,
    "sum": _simple(lambda a: ad.sum_(a, axis=1), (3, 4, 2)),
    "mean": _simple(lambda a: ad.mean(a, axis=-1, keepdims=True), (3, 4)),
    "matmul (batched)": _simple(lambda a, b: a @ b, (2, 3, 4), (4, 5)),
    "linear": _simple(ad.linear, (2, 3, 4), (4, 5), (5,)),
    "conv1d stride 1": _conv_case(1),
    "conv1d stride 2": _conv_case(2),
    "softmax": _simple(ad.softmax, (3, 5)),
    "log_softmax": _simple(ad.log_softmax, (3, 5)),
    "layer_norm": _simple(ad.layer_norm, (3, 6), (6,), (6,)),
    "cross_entropy": _ce_case,
    "nll": _nll_case,
    "self-attention (causal)": _attention_case(True, False),
    "cross-attention": _attention_case(False, True),
    "adapter block": _adapter_case,
    "reprogram addition": _reprogram_case,
    "group-softmax mapping": _group_softmax_case,
}


def _full_forward_error(rng):
    """Directional central difference through the whole toy model, all parameters at once."""
    m = TransformerModel.init(TINY, rng).astype(np.float64)
    mel = _p(rng, 2, 4, 8)
    tokens = [SOT, int(rng.integers(1, 12)), int(rng.integers(1, 12))]
    targets = rng.integers(0, 12, 6)
    params = [t for _, t in m.registry.items()] + [mel]

    def loss():
        return ad.cross_entropy(m(mel, tokens).reshape(-1, 12), targets)

    loss().backward()
    dirs = [rng.standard_normal(t.shape) for t in params]
    analytic = sum(float((t.grad * d).sum()) for t, d in zip(params, dirs))
    h = 1e-5
    with ad.no_grad():
        for t, d in zip(params, dirs):
            t.data += h * d
        fp = loss().item()
        for t, d in zip(params, dirs):
            t.data -= 2 * h * d
        fm = loss().item()
    numeric = (fp - fm) / (2 * h)
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric))


def test_gradient_suite(criterion):
    t0 = time.time()
    n = 20
    worst: dict[str, float] = {}
    for i, (name, case) in enumerate(GRAD_CASES.items()):
        rng = np.random.default_rng(1000 + i)
        errs = []
        for _ in range(n):
            f, ts = case(rng)
            errs.append(check_grads(f, ts))
        worst[name] = max(errs)
    rng = np.random.default_rng(7)
    worst["full toy forward"] = max(_full_forward_error(rng) for _ in range(n))
    bad = {k: v for k, v in worst.items() if not v < 1e-5}
    top = max(worst, key=worst.get)
    criterion(f"gradient suite ({len(worst)} ops x {n} instances, rel err < 1e-5)", not bad,
              f"worst {top} {worst[top]:.2e}" + (f"; failing {bad}" if bad else "") + f"; {time.time() - t0:.1f}s")


# -- freezing / preservation -----------------------------------------------------------------


def _small_data(per_class, seed):
    rng = np.random.default_rng(seed)
    cfg = SynthConfig(n_classes=2, bands_per_class=1, f_lo=200, f_hi=700, distractors=0)
    return ClipDataset([synth_dialect(c, 2.0, rng, cfg) for c in range(2) for _ in range(per_class)], SMALL_SPEC)


GRID_KINDS = ("all", "bias_only", "adapters_only", "reprogram_only")


def test_freezing_suite(criterion):
    t0 = time.time()
    data = _small_data(8, 0)
    adapters = AdapterConfig(4, sites=[("encoder", 0), ("encoder", 1), ("decoder", 0)])
    failures, grid = [], 0
    for region in ("full", "encoder", "decoder"):
        for kind in GRID_KINDS:
            sel = ScopeSelector(region, kind)
            m = TransformerModel.init(SMALL, np.random.default_rng(3))
            cfg = TrainConfig(base_lr=1e-2, epochs=2, batch_size=8, samples_per_class=8, selector=sel,
                              adapter=adapters, reprogram=True)
            head = prepare_model(m, cfg, 2)
            before = m.registry.snapshot()
            scope = set(resolve_scope(m.registry, sel))
            train(m, cfg, head, data)
            moved = {n for n in m.registry if not np.array_equal(m.registry[n].data, before[n])}
            if moved - scope:
                failures.append(f"{sel}: out-of-scope changed {sorted(moved - scope)[:3]}")
            if scope and not moved:
                failures.append(f"{sel}: nothing in scope moved")
            grid += 1
    criterion(f"freezing suite ({grid} selectors, 2-epoch runs)", not failures and grid == 12,
              "; ".join(failures) or f"out-of-scope parameters bit-identical; {time.time() - t0:.1f}s")


def test_function_preservation(criterion):
    rng = np.random.default_rng(0)
    m = TransformerModel.init(ModelConfig(), rng)
    xs = rng.standard_normal((100, 16, 150)).astype(np.float32)

    def outputs():
        with ad.no_grad():
            return np.concatenate([m.first_logits(xs[i:i + 25]).data for i in range(0, 100, 25)])

    before = outputs()
    insert_adapters(m, AdapterConfig(16, sites=[("encoder", 0), ("encoder", 1), ("decoder", 0), ("decoder", 1)]),
                    np.random.default_rng(1))
    same_adapter = np.array_equal(outputs(), before)
    attach_reprogram(m, ReprogramDelta.zeros(16, 150))
    same_reprogram = np.array_equal(outputs(), before)
    criterion("function preservation (100 inputs, exact)", same_adapter and same_reprogram,
              f"zero-up adapters identical={same_adapter}, zero delta identical={same_reprogram}")


# -- end-to-end synthetic experiment ----------------------------------------------------------


@pytest.fixture(scope="module")
def backbone():
    t0 = time.time()
    model = pretrain_backbone(ModelConfig(), seed=0)
    print(f"pretraining {time.time() - t0:.1f}s")
    return model


def _pairs(per_class, stream):
    rng = derive_rng(0, stream)
    return ClipDataset([synth_dialect(c, 30.0, rng, PAIRS) for c in range(4) for _ in range(per_class)], DESK)


E2E_VARIANTS = {
    "full": TrainConfig(base_lr=1e-3, epochs=15, batch_size=32, selector=ScopeSelector("full", "all")),
    "adapters": TrainConfig(base_lr=1e-2, epochs=15, batch_size=32, selector=ScopeSelector("full", "adapters_only"),
                            adapter=AdapterConfig(16), head=HeadConfig("map")),
    "bitfit": TrainConfig(base_lr=1e-2, epochs=15, batch_size=32, selector=ScopeSelector("full", "bias_only")),
    "reprogram": TrainConfig(base_lr=1e-2, epochs=15, batch_size=32,
                             selector=ScopeSelector("full", "reprogram_only"), reprogram=True,
                             head=HeadConfig("map")),
}


@pytest.fixture(scope="module")
def e2e(backbone):
    t0 = time.time()
    train_set, dev, test = _pairs(500, "e2e-train"), _pairs(50, "e2e-dev"), _pairs(100, "e2e-test")
    runs = {}
    frozen = backbone.clone()
    head = prepare_model(frozen, TrainConfig(head=HeadConfig("map"), selector=ScopeSelector("full", "all")), 4)
    runs["frozen"] = (frozen, head, evaluate_accuracy(frozen, head, test), 0)
    for name, cfg in E2E_VARIANTS.items():
        m = backbone.clone()
        head = prepare_model(m, cfg, 4)
        train(m, cfg, head, train_set, dev)
        runs[name] = (m, head, evaluate_accuracy(m, head, test), m.registry.trainable_count())
    return runs, time.time() - t0


def test_end_to_end_trend(e2e, criterion):
    runs, seconds = e2e
    acc = {k: v[2] for k, v in runs.items()}
    checks = {
        "full >= 95": acc["full"] >= 95.0,
        "adapters within 5 pp of full": acc["adapters"] >= acc["full"] - 5.0,
        "frozen < BitFit < adapters": acc["frozen"] < acc["bitfit"] < acc["adapters"],
        "reprogram >= frozen + 10": acc["reprogram"] >= acc["frozen"] + 10.0,
    }
    detail = ", ".join(f"{k} {v:.2f}%" for k, v in acc.items())
    failed = [k for k, ok in checks.items() if not ok]
    criterion("end-to-end trend (4-class synthetic, n=64)", not failed,
              detail + (f"; failed {failed}" if failed else "") + f"; {seconds:.0f}s after pretraining")


def test_mask_diff_ordering(e2e, criterion):
    """Supplementary: adapter maps sit closer to full fine-tuning than to the frozen model."""
    runs, _ = e2e
    cfg = SaliencyConfig(patch_mels=4, patch_frames=10, fill_value="median")
    rng = derive_rng(0, "mask-diff")
    near, far = [], []
    for start in (3.0, 12.0, 18.0):
        synth = SynthConfig(**{**PAIRS.__dict__, "active": (start, start + 10.0)})
        for c in range(4):
            mel = log_mel(synth_dialect(c, 30.0, rng, synth), DESK)
            maps = {k: occlusion_map(model_prob_fn(runs[k][0], runs[k][1]), mel, cfg)
                    for k in ("adapters", "full", "frozen")}
            near.append(np.abs(mask_diff(maps["adapters"], maps["full"])).mean())
            far.append(np.abs(mask_diff(maps["adapters"], maps["frozen"])).mean())
    criterion("supplementary: mask-diff ordering", np.mean(near) < np.mean(far),
              f"mean |adapter - full| {np.mean(near):.3f} vs |adapter - frozen| {np.mean(far):.3f}")


# -- label mapping ---------------------------------------------------------------------------


def test_label_mapping_properties(criterion):
    t0 = time.time()
    rng = np.random.default_rng(2024)
    worst_norm = worst_perm = worst_shift = 0.0
    for _ in range(1000):
        d, k = int(rng.integers(2, 8)), int(rng.integers(1, 4))
        vocab = d * k + int(rng.integers(0, 20))
        lmap = random_map(d, k, range(vocab), rng)
        logits = rng.normal(0, 4, vocab)
        p = dialect_probs(logits, lmap).data
        worst_norm = max(worst_norm, abs(p.sum() - 1.0), float(max(0.0, -p.min())))
        shuffled = LabelMap(tuple(tuple(rng.permutation(g).tolist()) for g in lmap.groups))
        worst_perm = max(worst_perm, float(np.abs(dialect_probs(logits, shuffled).data - p).max()))
        shift = float(rng.normal(0, 10))
        worst_shift = max(worst_shift, float(np.abs(dialect_probs(logits + shift, lmap).data - p).max()))
    ok = worst_norm <= 1e-6 and worst_perm <= 1e-12 and worst_shift <= 1e-9
    criterion("label-mapping properties (1000 instances)", ok,
              f"normalisation {worst_norm:.1e}, permutation {worst_perm:.1e}, shift {worst_shift:.1e}; "
              f"{time.time() - t0:.1f}s")


# -- saliency ---------------------------------------------------------------------------------


def test_saliency_localization(backbone, criterion):
    t0 = time.time()
    head = Head("extend", source_label_map(backbone.config))
    prob_fn = model_prob_fn(backbone, head)
    cfg = SaliencyConfig(patch_mels=4, patch_frames=10, fill_value="median")
    frames_per_second = DESK.sample_rate / DESK.hop
    rng = derive_rng(0, "saliency")
    fractions, wrong = [], 0
    for start in (2.0, 9.0, 16.0):
        synth = SynthConfig(**{**SOURCE_SYNTH.__dict__, "active": (start, start + 10.0)})
        band = (int(start * frames_per_second), int((start + 10.0) * frames_per_second))
        for c in range(SOURCE_SYNTH.n_classes):
            smap = occlusion_map(prob_fn, log_mel(synth_dialect(c, 30.0, rng, synth), DESK), cfg)
            if smap.target != c:
                wrong += 1
                continue
            fractions.append(mass_fraction(smap.values, band))
    mean_in = float(np.mean(fractions))

    def constant(batch):
        return np.full((len(batch), 4), 0.25)

    zero = not occlusion_map(constant, np.random.default_rng(0).standard_normal((16, 150)), cfg).values.any()
    criterion("saliency localization (>= 60% mass in band; constant -> zero map)", mean_in >= 0.6 and zero,
              f"mean in-band mass {mean_in:.1%} over {len(fractions)} correctly classified clips "
              f"({wrong} misclassified skipped); constant map all-zero={zero}; {time.time() - t0:.1f}s")


# -- epoch plans -------------------------------------------------------------------------------


class _Sizes:
    def __init__(self, sizes):
        self.groups = {c: list(range(n)) for c, n in enumerate(sizes)}

    def by_class(self):
        return self.groups


def test_epoch_plan_balance(criterion):
    sizes = _Sizes([1, 10_000])
    hists, reproducible = [], True
    for spc in (1, 500, 10_000, 20_000):
        plan = make_epoch_plan(sizes, spc, np.random.default_rng(spc))
        hists.append(set(Counter(e.class_id for e in plan).values()) == {spc} and len(plan) == 2 * spc)
        again = make_epoch_plan(sizes, spc, np.random.default_rng(spc))
        reproducible &= plan == again
    long = AudioClip(np.random.default_rng(3).standard_normal(60 * 2000).astype(np.float32), 2000, 0)
    ds = ClipDataset([long], DESK)
    seed = make_epoch_plan(ds, 4, np.random.default_rng(9))[0].window_seed
    reproducible &= np.array_equal(ds.features(0, seed), ds.features(0, seed))
    criterion("epoch-plan balance (1 vs 10,000 clips)", all(hists) and reproducible,
              f"uniform histograms {sum(hists)}/{len(hists)}, seed-reproducible windows={reproducible}")


# -- persistence ---------------------------------------------------------------------------------


def _rewrite(path, edit):
    import json
    raw = path.read_bytes()
    nl = raw.index(b"\n")
    length = int(raw[:nl].split()[2])
    manifest = json.loads(raw[nl + 1:nl + 1 + length])
    blob = raw[nl + 2 + length:]
    edit(manifest)
    body = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    path.write_bytes(b"PELCKPT 1 %d\n" % len(body) + body + b"\n" + blob)


def test_persistence(tmp_path, criterion):
    m = TransformerModel.init(SMALL, np.random.default_rng(0))
    cfg = TrainConfig(base_lr=1e-2, epochs=1, batch_size=8, samples_per_class=8, adapter=AdapterConfig(4),
                      selector=ScopeSelector("full", "adapters_only"), head=HeadConfig("map"))
    head = prepare_model(m, cfg, 2)
    train(m, cfg, head, _small_data(8, 1))
    path = tmp_path / "m.ckpt"
    save_model(m, path, head, SMALL_SPEC, {"seed": 0, "epochs_completed": 1})
    back, back_head, _ = load_model(path)
    exact = all(np.array_equal(back.registry[n].data, m.registry[n].data)
                and back.registry.is_trainable(n) == m.registry.is_trainable(n) for n in m.registry)
    exact &= back_head == head and base_param_count(back) == base_param_count(m)
    save_model(m, tmp_path / "again.ckpt", head, SMALL_SPEC, {"seed": 0, "epochs_completed": 1})
    deterministic = path.read_bytes() == (tmp_path / "again.ckpt").read_bytes()

    kinds = {}
    cases = {
        "shrunk shape": (lambda p: _rewrite(p, lambda man: man["params"][2]["shape"].__setitem__(0, 1)),
                         OffsetConsistencyError),
        "truncated blob": (lambda p: p.write_bytes(p.read_bytes()[:-7]), TruncatedBlobError),
        "version bump": (lambda p: _rewrite(p, lambda man: man.__setitem__("format_version", 99)),
                         VersionMismatchError),
    }
    for label, (corrupt, expected) in cases.items():
        bad = tmp_path / f"{label.replace(' ', '_')}.ckpt"
        save_checkpoint(m.registry, {}, bad)
        corrupt(bad)
        try:
            load_checkpoint(bad)
            kinds[label] = None
        except Exception as exc:  # noqa: BLE001 - the kind is what is being checked
            kinds[label] = type(exc) is expected
    ok = exact and deterministic and all(kinds.values())
    criterion("persistence (bit-exact round trip, corruption kinds)", ok,
              f"round trip exact={exact}, byte-identical saves={deterministic}, error kinds={kinds}")
