"""Property suite behind ``verify``: gradients, kernel equivalences and channel invariants."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from src.autodiff.functional import (
    ActivationKind,
    BatchNormMode,
    BatchNormState,
    ConvParams,
    activation_forward,
    batchnorm_forward,
    conv1d_forward,
    dense_forward,
    maxpool1d_forward,
)
from src.autodiff.gradcheck import GradCheckReport, check_gradients
from src.autodiff.loss import one_hot, softmax_cross_entropy
from src.autodiff.tensor import Tape, Tensor, sum_all
from src.binary.engine import PackedBcnn, measure_throughput
from src.binary.ops import SignTensor, binarize, binary_conv1d
from src.binary.packing import pack, pack_kernels, packed_conv1d, xnor_popcount_dot
from src.config import NUMERIC
from src.dataset.windows import WindowedDataset, generate_cell, split
from src.harness.gradients import KinkRedrawError, check_model_gradients
from src.harness.models import DecisionModel, ModelKind, build_model, preset_spec
from src.link.channel import ChannelConfig
from src.link.simulate import apply_awgn, eye_opening, hard_decision_errors, noise_variance, simulate_link

LOGGER = logging.getLogger(__name__)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""
    metrics: Dict[str, float] = field(default_factory=dict)


@dataclass
class VerifyReport:
    results: List[CheckResult] = field(default_factory=list)
    informational: Dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(result.passed for result in self.results)

    def render(self) -> str:
        lines = []
        for result in self.results:
            status = "PASS" if result.passed else "FAIL"
            lines.append(f"[{status}] {result.name}: {result.detail}")
            for key, value in sorted(result.metrics.items()):
                lines.append(f"        {key}: {value:.3e}")
        for key, value in sorted(self.informational.items()):
            lines.append(f"[INFO] {key}: {value:.3f}")
        lines.append("verification " + ("passed" if self.passed else "FAILED"))
        return "\n".join(lines)


@dataclass(slots=True)
class VerifyOptions:
    seed: int = 0
    oracle_draws: int = 100
    binary_cases: int = 1000
    gradient_batches: int = 5
    gradient_batch_size: int = 8
    channel_symbols: int = 100_000
    throughput_windows: int = 2048


def naive_conv1d(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray, padding: int, stride: int) -> np.ndarray:
    batch, channels, length = x.shape
    n_out, _, width = kernels.shape
    padded = np.zeros((batch, channels, length + 2 * padding))
    padded[:, :, padding : padding + length] = x
    out_len = (length + 2 * padding - width) // stride + 1
    out = np.zeros((batch, n_out, out_len))
    for b in range(batch):
        for n in range(n_out):
            for pos in range(out_len):
                total = bias[n]
                for c in range(channels):
                    for f in range(width):
                        total += padded[b, c, pos * stride + f] * kernels[n, c, f]
                out[b, n, pos] = total
    return out


def naive_dense(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    out = np.zeros((x.shape[0], weights.shape[1]))
    for b in range(x.shape[0]):
        for j in range(weights.shape[1]):
            total = bias[j]
            for i in range(x.shape[1]):
                total += x[b, i] * weights[i, j]
            out[b, j] = total
    return out


def _max_rel(a: np.ndarray, b: np.ndarray) -> float:
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-300)
    return float(np.max(np.abs(a - b) / scale)) if a.size else 0.0


def check_oracles(opts: VerifyOptions) -> CheckResult:
    rng = np.random.default_rng(opts.seed)
    worst_conv = worst_dense = 0.0
    for _ in range(opts.oracle_draws):
        batch, channels, length = rng.integers(1, 4), rng.integers(1, 5), rng.integers(3, 13)
        n_out, width = rng.integers(1, 5), rng.integers(1, 4)
        padding, stride = rng.integers(0, 3), rng.integers(1, 3)
        x = rng.normal(size=(batch, channels, length))
        kernels = rng.normal(size=(n_out, channels, width))
        bias = rng.normal(size=n_out)
        params = ConvParams(Tensor(kernels), Tensor(bias), padding=int(padding), stride=int(stride))
        got = conv1d_forward(Tensor(x), params).values
        worst_conv = max(worst_conv, _max_rel(got, naive_conv1d(x, kernels, bias, int(padding), int(stride))))
        d_in, d_out = rng.integers(1, 9), rng.integers(1, 5)
        xd = rng.normal(size=(batch, d_in))
        w = rng.normal(size=(d_in, d_out))
        bd = rng.normal(size=d_out)
        got_dense = dense_forward(Tensor(xd), Tensor(w), Tensor(bd)).values
        worst_dense = max(worst_dense, _max_rel(got_dense, naive_dense(xd, w, bd)))
    passed = worst_conv < 1e-10 and worst_dense < 1e-10
    return CheckResult(
        "conv/dense oracle equivalence",
        passed,
        f"{opts.oracle_draws} random draws",
        {"conv max rel error": worst_conv, "dense max rel error": worst_dense},
    )


def check_loss() -> CheckResult:
    loss, _ = softmax_cross_entropy(Tensor(np.zeros((4, 2))), one_hot(np.array([0, 1, 0, 1])))
    uniform = abs(loss.item() - math.log(2.0))
    rng = np.random.default_rng(1)
    wide = Tensor(rng.normal(scale=30.0, size=(64, 5)))
    _, random_probs = softmax_cross_entropy(wide, np.eye(5)[rng.integers(0, 5, 64)])
    row_error = float(np.max(np.abs(random_probs.values.sum(axis=1) - 1.0)))
    return CheckResult(
        "softmax cross-entropy sanity",
        uniform < 1e-12 and row_error < 1e-12 and loss.item() >= 0,
        "uniform logits give ln 2, rows sum to 1",
        {"|loss - ln 2|": uniform, "max |row sum - 1|": row_error},
    )


def _layer_cases(rng: np.random.Generator) -> Dict[str, Tuple[Callable[[Optional[Tape]], Tensor], List[Tensor]]]:
    x = Tensor(rng.normal(size=(3, 2, 8)), name="input")
    conv = ConvParams(
        Tensor(rng.normal(size=(4, 2, 3)), name="kernels"), Tensor(rng.normal(size=4), name="bias"), padding=1
    )
    weights = Tensor(rng.normal(size=(16, 3)), name="weights")
    bias = Tensor(rng.normal(size=3), name="bias")
    flat = Tensor(rng.normal(size=(5, 16)), name="input")
    bn = BatchNormState.fresh(2, name="bn")
    bn.gamma.values[:] = rng.uniform(0.5, 1.5, 2)
    bn.beta.values[:] = rng.normal(size=2)
    weights_out = rng.normal(size=(2, 8))
    pool_input = Tensor(rng.permutation(48).reshape(3, 2, 8) * 0.1, name="input")
    logits = Tensor(rng.normal(size=(6, 3)), name="logits")
    labels = np.eye(3)[rng.integers(0, 3, 6)]

    def weighted_sum(out: Tensor, tape: Optional[Tape], w: np.ndarray) -> Tensor:
        weighted = Tensor(out.values * w)
        if tape is not None:
            tape.record("weight", (out,), weighted, lambda grad: (grad * w,))
        return sum_all(weighted, tape)

    def conv_loss(tape):
        out = conv1d_forward(x, conv, tape)
        return weighted_sum(out, tape, np.cos(np.arange(out.size)).reshape(out.shape))

    def dense_loss(tape):
        out = dense_forward(flat, weights, bias, tape)
        return weighted_sum(out, tape, np.sin(np.arange(out.size)).reshape(out.shape) + 1.5)

    def bn_loss(tape):
        bn.mode = BatchNormMode.TRAIN
        out = batchnorm_forward(x, bn, tape)
        return weighted_sum(out, tape, np.broadcast_to(weights_out, out.shape) * np.arange(1, 4)[:, None, None])

    def act_loss(tape):
        out = activation_forward(x, ActivationKind.LEAKY_RELU, tape=tape)
        return weighted_sum(out, tape, np.cos(np.arange(out.size)).reshape(out.shape))

    def pool_loss(tape):
        out, _ = maxpool1d_forward(pool_input, 2, 2, tape)
        return weighted_sum(out, tape, np.cos(np.arange(out.size)).reshape(out.shape))

    def xent_loss(tape):
        loss, _ = softmax_cross_entropy(logits, labels, tape)
        return loss

    return {
        "conv1d": (conv_loss, [x, conv.kernels, conv.bias]),
        "dense": (dense_loss, [flat, weights, bias]),
        "batchnorm": (bn_loss, [x, bn.gamma, bn.beta]),
        "leaky_relu": (act_loss, [x]),
        "maxpool1d": (pool_loss, [pool_input]),
        "softmax_cross_entropy": (xent_loss, [logits]),
    }


def check_layer_gradients(opts: VerifyOptions) -> CheckResult:
    rng = np.random.default_rng(opts.seed + 1)
    metrics: Dict[str, float] = {}
    for name, (loss_fn, params) in _layer_cases(rng).items():
        metrics[name] = check_gradients(loss_fn, params).max_rel_error
    worst = max(metrics.values())
    return CheckResult(
        "layer gradients vs central differences",
        worst < NUMERIC.gradcheck_tolerance,
        f"max rel error {worst:.3e} (h = {NUMERIC.gradcheck_step})",
        metrics,
    )


def _noisy_windows(seed: int, n_windows: int = 4000) -> WindowedDataset:
    channel = ChannelConfig.preset("d15km")
    raw = generate_cell(channel, channel.median_power, n_windows, seed)
    train, _ = split(raw, 0.8, seed)
    return train


def check_model_gradient_suite(opts: VerifyOptions, data: WindowedDataset) -> List[CheckResult]:
    results = []
    for kind in (ModelKind.CNN, ModelKind.BCNN, ModelKind.FCNN):
        model = build_model(preset_spec(kind, seed=opts.seed))
        try:
            report: GradCheckReport = check_model_gradients(
                model,
                data.inputs,
                data.labels,
                batches=opts.gradient_batches,
                batch_size=opts.gradient_batch_size,
                seed=opts.seed,
            )
        except KinkRedrawError as exc:
            results.append(CheckResult(f"{kind.value} gradients vs central differences", False, str(exc)))
            continue
        results.append(
            CheckResult(
                f"{kind.value} gradients vs central differences",
                report.passed,
                f"{opts.gradient_batches} batches of {opts.gradient_batch_size}, "
                f"max rel error {report.max_rel_error:.3e}",
                report.by_layer(),
            )
        )
    return results


def check_binary_kernels(opts: VerifyOptions) -> CheckResult:
    rng = np.random.default_rng(opts.seed + 2)
    mismatches = 0
    for _ in range(opts.binary_cases):
        batch, channels, length = rng.integers(1, 4), rng.integers(1, 9), rng.integers(5, 17)
        n_out, width = rng.integers(1, 6), rng.integers(1, 6)
        padding, stride = rng.integers(0, 3), rng.integers(1, 3)
        x = SignTensor(rng.choice(np.array([-1, 1], dtype=np.int8), size=(batch, channels, length)))
        kernels = SignTensor(rng.choice(np.array([-1, 1], dtype=np.int8), size=(n_out, channels, width)))
        naive = binary_conv1d(x, kernels, int(padding), int(stride))
        padded = np.pad(x.as_real(), ((0, 0), (0, 0), (padding, padding)), constant_values=1.0)
        real = conv1d_forward(Tensor(padded), ConvParams(Tensor(kernels.as_real()), stride=int(stride))).values
        packed = packed_conv1d(x, pack_kernels(kernels), int(width), padding=int(padding), stride=int(stride))
        if not (np.array_equal(naive, real.astype(np.int64)) and np.array_equal(naive, packed)):
            mismatches += 1
        if np.any(np.abs(real - np.rint(real)) > 0):
            mismatches += 1

    # every agreement pattern of length n <= 16 appears once against an all-ones partner
    for n in range(1, 17):
        codes = np.arange(2**n, dtype=np.uint32)
        a = ((codes[:, None] >> np.arange(n, dtype=np.uint32)) & 1).astype(np.int8) * 2 - 1
        ones = np.ones_like(a)
        partner = rng.choice(np.array([-1, 1], dtype=np.int8), size=n)
        for b in (ones, np.broadcast_to(partner, a.shape)):
            expected = (a.astype(np.int64) * b).sum(axis=1)
            if not np.array_equal(xnor_popcount_dot(pack(a), pack(np.ascontiguousarray(b)), n), expected):
                mismatches += 1
    for n in rng.integers(1, 513, size=200):
        a = rng.choice(np.array([-1, 1], dtype=np.int8), size=(16, int(n)))
        b = rng.choice(np.array([-1, 1], dtype=np.int8), size=(16, int(n)))
        if not np.array_equal(xnor_popcount_dot(pack(a), pack(b)), (a.astype(np.int64) * b).sum(axis=1)):
            mismatches += 1
    return CheckResult(
        "binary kernel exactness",
        mismatches == 0,
        f"{opts.binary_cases} conv cases, exhaustive dots n <= 16, random dots n <= 512; {mismatches} mismatches",
    )


def check_stage_collapse(opts: VerifyOptions) -> CheckResult:
    rng = np.random.default_rng(opts.seed + 3)
    failures = 0
    for _ in range(200):
        x = Tensor(rng.normal(size=(4, 6, 8)))
        state = BatchNormState.fresh(6)
        state.gamma.values[:] = rng.normal(size=6)
        state.beta.values[:] = rng.normal(size=6)
        normed = batchnorm_forward(x, state)
        signs = Tensor(binarize(normed).as_real())
        activated = Tensor(binarize(activation_forward(signs)).as_real())
        staged = binarize(maxpool1d_forward(activated)[0])
        collapsed = binarize(maxpool1d_forward(activation_forward(normed))[0])
        failures += int(not np.array_equal(staged.signs, collapsed.signs))
    return CheckResult("binarize-once stage collapse", failures == 0, f"{failures} of 200 random blocks differ")


def check_packed_engine(opts: VerifyOptions, data: WindowedDataset, report: VerifyReport) -> CheckResult:
    model = build_model(preset_spec(ModelKind.BCNN, seed=opts.seed))
    assert isinstance(model, DecisionModel)
    # a few train-mode passes give the batch-norm layers non-trivial running statistics
    for start in range(0, 4 * 256, 256):
        model.forward(Tensor(data.inputs[start : start + 256]), training=True)
    engine = PackedBcnn.from_model(model)
    windows = data.inputs[: opts.throughput_windows]
    float_path = model.predict(windows)
    packed_path = engine.predict(windows)
    naive_path = np.argmax(engine.integer_logits(windows, naive=True), axis=1)
    agree = np.array_equal(float_path, packed_path) and np.array_equal(packed_path, naive_path)
    rates = measure_throughput(engine, windows)
    report.informational["packed/naive throughput ratio"] = rates["speedup"]
    return CheckResult(
        "packed BCNN inference equals latent float path",
        agree,
        f"{len(windows)} windows, {int(np.count_nonzero(float_path != packed_path))} differing decisions",
    )


def check_single_precision(opts: VerifyOptions, data: WindowedDataset) -> CheckResult:
    model = build_model(preset_spec(ModelKind.CNN, seed=opts.seed))
    for start in range(0, 4 * 256, 256):
        model.forward(Tensor(data.inputs[start : start + 256]), training=True)
    double = model.predict(data.inputs)
    single = model.predict(data.inputs, dtype=np.float32)
    agreement = float(np.mean(double == single))
    return CheckResult(
        "single-precision inference agreement", agreement >= 0.9999, f"{agreement:.6f} of decisions agree"
    )


def check_channel(opts: VerifyOptions) -> CheckResult:
    problems: List[str] = []
    clean = ChannelConfig.preset("d10km", isi_taps=[1.0], a3=0.0)
    errors, _ = hard_decision_errors(simulate_link(clean, 2000, None, opts.seed))
    if errors:
        problems.append(f"clean chain made {errors} errors")

    openings = {
        name: eye_opening(simulate_link(ChannelConfig.preset(name), 10_000, None, opts.seed))
        for name in ("d10km", "d15km", "d20km")
    }
    if not openings["d10km"] > openings["d15km"] > openings["d20km"]:
        problems.append(f"eye openings not ordered: {openings}")

    base = simulate_link(ChannelConfig.preset("d15km"), opts.channel_symbols // 4, None, opts.seed)
    noisy = apply_awgn(base, 10.0, opts.seed)
    commanded = noise_variance(base.samples, 10.0)
    measured = float(np.var(noisy.samples - base.samples))
    if abs(measured / commanded - 1.0) > 0.02:
        problems.append(f"noise variance off by {measured / commanded - 1.0:+.3%}")

    first = simulate_link(ChannelConfig.preset("d20km"), 5000, -18.0, opts.seed)
    second = simulate_link(ChannelConfig.preset("d20km"), 5000, -18.0, opts.seed)
    if not np.array_equal(first.samples, second.samples):
        problems.append("same seed gave different waveforms")

    return CheckResult(
        "channel invariants",
        not problems,
        "; ".join(problems) or "clean chain, eye ordering, noise energy, determinism",
        {f"eye opening {name}": value for name, value in openings.items()},
    )


def run_verification(opts: Optional[VerifyOptions] = None) -> VerifyReport:
    opts = opts or VerifyOptions()
    report = VerifyReport()
    started = time.perf_counter()
    data = _noisy_windows(opts.seed)
    report.results.append(check_oracles(opts))
    report.results.append(check_loss())
    report.results.append(check_layer_gradients(opts))
    report.results.extend(check_model_gradient_suite(opts, data))
    report.results.append(check_binary_kernels(opts))
    report.results.append(check_stage_collapse(opts))
    report.results.append(check_packed_engine(opts, data, report))
    report.results.append(check_single_precision(opts, data))
    report.results.append(check_channel(opts))
    for result in report.results:
        log = LOGGER.info if result.passed else LOGGER.error
        log("%s: %s", result.name, "pass" if result.passed else "FAIL")
    LOGGER.info("Verification finished in %.1f s", time.perf_counter() - started)
    return report
