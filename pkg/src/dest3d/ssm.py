"""State-space scan core.

The recurrence advanced here is, per step t and state channel (k, e):

    h_t[k, e] = a_bar[t, k, e] * h_{t-1}[k, e] + b_bar[t, k, e] * x[t, e]
    y_t[e]    = sum_k c[t, k] * h_t[k, e]

with K state rows attending one shared input sequence of length M. Besides
the plain sequential sweep there is a chunked variant (identical outputs,
chunk summaries combine as affine maps), a time-invariant convolutional form
used as an equivalence oracle, and an analytic reverse-mode pass checked
against finite differences.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ScanInputs",
    "ScanOutputs",
    "ScanGradients",
    "discretize_zoh",
    "scan_sequential",
    "scan_chunked",
    "lti_conv_form",
    "scan_backward",
    "finite_diff_grad",
]


@dataclass
class ScanInputs:
    """Discrete scan parameters: a_bar/b_bar (M,K,E), c (M,K), x (M,E), h0 (K,E)."""

    a_bar: np.ndarray
    b_bar: np.ndarray
    c: np.ndarray
    x: np.ndarray
    h0: np.ndarray

    def __post_init__(self):
        self.a_bar = np.asarray(self.a_bar, dtype=np.float64)
        self.b_bar = np.asarray(self.b_bar, dtype=np.float64)
        self.c = np.asarray(self.c, dtype=np.float64)
        self.x = np.asarray(self.x, dtype=np.float64)
        self.h0 = np.asarray(self.h0, dtype=np.float64)
        m, k, e = self.a_bar.shape
        if self.b_bar.shape != (m, k, e):
            raise ValueError(f"b_bar shape {self.b_bar.shape} != {(m, k, e)}")
        if self.c.shape != (m, k):
            raise ValueError(f"c shape {self.c.shape} != {(m, k)}")
        if self.x.shape != (m, e):
            raise ValueError(f"x shape {self.x.shape} != {(m, e)}")
        if self.h0.shape != (k, e):
            raise ValueError(f"h0 shape {self.h0.shape} != {(k, e)}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.a_bar.shape


@dataclass
class ScanOutputs:
    """Per-step outputs y (M,E), final states (K,E), optional state trace."""

    y: np.ndarray
    h_final: np.ndarray
    h_trace: np.ndarray | None = None


@dataclass
class ScanGradients:
    a_bar: np.ndarray
    b_bar: np.ndarray
    c: np.ndarray
    x: np.ndarray
    h0: np.ndarray


def discretize_zoh(delta: np.ndarray, a: np.ndarray, b: np.ndarray,
                   mode: str = "euler") -> tuple[np.ndarray, np.ndarray]:
    """Discretize a continuous diagonal system over per-step timescales.

    delta is (M, K, E) and non-negative, a is (E,) and expected non-positive,
    b is (M, K). Both modes share a_bar = exp(delta * a). Mode "euler" takes
    b_bar = delta * b; mode "exact" applies the zero-order-hold correction
    (expm1(da)/da) * delta * b with the da -> 0 limit handled analytically.
    """
    delta = np.asarray(delta, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if delta.ndim != 3 or a.shape != (delta.shape[2],) or b.shape != delta.shape[:2]:
        raise ValueError(
            f"shape mismatch: delta {delta.shape}, a {a.shape}, b {b.shape}"
        )
    if (delta < 0).any():
        raise ValueError("delta must be non-negative")
    if mode not in ("euler", "exact"):
        raise ValueError(f"unknown discretization mode {mode!r}")
    if mode == "exact" and (a > 0).any():
        warnings.warn("positive transition coefficients: exact mode may be unstable",
                      RuntimeWarning, stacklevel=2)
    da = delta * a
    a_bar = np.exp(da)
    scaled = delta * b[:, :, None]
    if mode == "euler":
        return a_bar, scaled
    phi = np.where(da == 0.0, 1.0, np.divide(np.expm1(da), np.where(da == 0.0, 1.0, da)))
    return a_bar, phi * scaled


def scan_sequential(inputs: ScanInputs, keep_trace: bool = False) -> ScanOutputs:
    """Plain left-to-right recurrence."""
    m, k, e = inputs.shape
    h = inputs.h0.copy()
    y = np.empty((m, e), dtype=np.float64)
    trace = np.empty((m, k, e), dtype=np.float64) if keep_trace else None
    for t in range(m):
        h = inputs.a_bar[t] * h + inputs.b_bar[t] * inputs.x[t]
        y[t] = inputs.c[t] @ h
        if keep_trace:
            trace[t] = h
    return ScanOutputs(y=y, h_final=h, h_trace=trace)


def scan_chunked(inputs: ScanInputs, chunk: int, keep_trace: bool = False) -> ScanOutputs:
    """Chunked scan with identical contract to scan_sequential.

    Each chunk is summarized as the affine map h -> A*h + B it applies to the
    incoming state (composition (a2*a1, a2*b1 + b2)); summaries combine
    sequentially to give every chunk its exact entry state, after which chunks
    are independent and could run concurrently. The reduction order is fixed,
    so results do not depend on worker count.
    """
    if chunk < 1:
        raise ValueError("chunk must be >= 1")
    m, k, e = inputs.shape
    starts = list(range(0, m, chunk))
    # Phase 1: per-chunk affine summaries (A = prod a, B = zero-init scan tail).
    summaries = []
    for s in starts:
        t_end = min(s + chunk, m)
        acc_a = np.ones((k, e), dtype=np.float64)
        acc_b = np.zeros((k, e), dtype=np.float64)
        for t in range(s, t_end):
            acc_b = inputs.a_bar[t] * acc_b + inputs.b_bar[t] * inputs.x[t]
            acc_a = inputs.a_bar[t] * acc_a
        summaries.append((acc_a, acc_b))
    # Phase 2: exact entry state per chunk.
    entries = [inputs.h0]
    for acc_a, acc_b in summaries[:-1]:
        entries.append(acc_a * entries[-1] + acc_b)
    # Phase 3: replay each chunk from its entry state.
    y = np.empty((m, e), dtype=np.float64)
    trace = np.empty((m, k, e), dtype=np.float64) if keep_trace else None
    h = inputs.h0
    for s, h_in in zip(starts, entries):
        t_end = min(s + chunk, m)
        h = h_in
        for t in range(s, t_end):
            h = inputs.a_bar[t] * h + inputs.b_bar[t] * inputs.x[t]
            y[t] = inputs.c[t] @ h
            if keep_trace:
                trace[t] = h
    return ScanOutputs(y=y, h_final=h, h_trace=trace)


def lti_conv_form(a_bar_0: np.ndarray, b_bar_0: np.ndarray, c0: np.ndarray,
                  x: np.ndarray) -> np.ndarray:
    """Time-invariant scan as a causal convolution (zero initial state).

    Kernel tap j per channel e is sum_k c0[k] * a_bar_0[k,e]^j * b_bar_0[k,e];
    the output is that kernel convolved causally with x. Equals the recurrence
    with the single-step parameters broadcast over time.
    """
    a_bar_0 = np.asarray(a_bar_0, dtype=np.float64)
    b_bar_0 = np.asarray(b_bar_0, dtype=np.float64)
    c0 = np.asarray(c0, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    m, e = x.shape
    powers = np.ones((m,) + a_bar_0.shape, dtype=np.float64)
    for j in range(1, m):
        powers[j] = powers[j - 1] * a_bar_0
    kern = np.einsum("k,jke,ke->je", c0, powers, b_bar_0)  # (M, E)
    y = np.zeros_like(x)
    for j in range(m):
        y[j:] += kern[j] * x[: m - j]
    return y


def scan_backward(inputs: ScanInputs, dy: np.ndarray, dh_final: np.ndarray,
                  h_trace: np.ndarray | None = None) -> ScanGradients:
    """Exact reverse-mode derivatives of (y, h_final) under scan_sequential.

    Reuses the forward state trace when given, otherwise recomputes it.
    """
    m, k, e = inputs.shape
    dy = np.asarray(dy, dtype=np.float64)
    dh_final = np.asarray(dh_final, dtype=np.float64)
    if dy.shape != (m, e) or dh_final.shape != (k, e):
        raise ValueError("cotangent shapes must match scan outputs")
    if h_trace is None:
        h_trace = scan_sequential(inputs, keep_trace=True).h_trace

    def h_prev(t: int) -> np.ndarray:
        return inputs.h0 if t == 0 else h_trace[t - 1]

    g = dh_final.copy()  # dL/dh_t, walking t from M-1 down
    grads = ScanGradients(
        a_bar=np.zeros((m, k, e)), b_bar=np.zeros((m, k, e)),
        c=np.zeros((m, k)), x=np.zeros((m, e)), h0=np.zeros((k, e)),
    )
    for t in range(m - 1, -1, -1):
        # y_t = c[t] @ h_t contributes to both c and h_t.
        grads.c[t] = h_trace[t] @ dy[t]
        g += inputs.c[t][:, None] * dy[t]
        # h_t = a_bar[t] * h_{t-1} + b_bar[t] * x[t]
        grads.a_bar[t] = g * h_prev(t)
        grads.b_bar[t] = g * inputs.x[t]
        grads.x[t] = (g * inputs.b_bar[t]).sum(axis=0)
        g = g * inputs.a_bar[t]
    grads.h0 = g
    return grads


def finite_diff_grad(f, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function, one coordinate at a time."""
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = f(x)
        flat[i] = orig - step
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * step)
    return grad
