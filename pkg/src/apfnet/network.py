"""Conv-recurrent occupancy field predictor with handwritten reverse-mode gradients.

Per frame the network runs three same-padded single-channel convolutions
(kernel sizes 9, 5, 7; ReLU on the first two, residual add of the first two
feature maps, no activation on the third), flattens to 324, steps an LSTM
cell (hidden 128) and then a GRU cell (hidden 324), and reshapes the GRU
hidden state to 36x9.  A fixed-gain sigmoid squashes the output into (0, 1)
to match cap-normalized supervision maps.

Everything is float64 numpy so analytic gradients can be checked against
central finite differences at tight tolerances.  Forward and backward are
deterministic; a single trace must not be shared across concurrent backward
calls.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .scenario import GRID_COLS, GRID_ROWS

FLAT = GRID_ROWS * GRID_COLS  # 324, also the GRU hidden size
DEFAULT_HIDDEN = 128

# The GRU hidden state is a convex combination of tanh values, so raw
# outputs live in (-1, 1).  A plain sigmoid of that range could never reach
# supervision values near 0 or 1; scaling the logits first restores the
# full (0, 1) range while keeping the all-zero-parameters output at 0.5.
OUTPUT_LOGIT_SCALE = 8.0

CHECKPOINT_MAGIC = b"APFNET01"

# lstm gate rows are packed [input, forget, candidate, output],
# gru gate rows are packed [update, reset, candidate].
_PARAM_ORDER = (
    "conv1_w",
    "conv1_b",
    "conv2_w",
    "conv2_b",
    "conv3_w",
    "conv3_b",
    "lstm_wx",
    "lstm_wh",
    "lstm_b",
    "gru_wx",
    "gru_wh",
    "gru_b",
)


def _sigmoid(v):
    # Clamp the exponent so very negative inputs underflow to 0 instead of
    # overflowing exp.
    return 1.0 / (1.0 + np.exp(np.minimum(-v, 709.0)))


def _param_shapes(hidden: int) -> dict[str, tuple[int, ...]]:
    return {
        "conv1_w": (9, 9),
        "conv1_b": (1,),
        "conv2_w": (5, 5),
        "conv2_b": (1,),
        "conv3_w": (7, 7),
        "conv3_b": (1,),
        "lstm_wx": (4 * hidden, FLAT),
        "lstm_wh": (4 * hidden, hidden),
        "lstm_b": (4 * hidden,),
        "gru_wx": (3 * FLAT, hidden),
        "gru_wh": (3 * FLAT, FLAT),
        "gru_b": (3 * FLAT,),
    }


@dataclass
class ModelParameters:
    """All weights and biases of the predictor.

    Convolutions are single-channel square kernels with a scalar bias stored
    as a 1-element array.  Recurrent weight matrices stack the gate rows as
    documented at module level.
    """

    conv1_w: np.ndarray
    conv1_b: np.ndarray
    conv2_w: np.ndarray
    conv2_b: np.ndarray
    conv3_w: np.ndarray
    conv3_b: np.ndarray
    lstm_wx: np.ndarray
    lstm_wh: np.ndarray
    lstm_b: np.ndarray
    gru_wx: np.ndarray
    gru_wh: np.ndarray
    gru_b: np.ndarray

    @property
    def hidden_size(self) -> int:
        return self.lstm_wh.shape[1]

    def arrays(self) -> dict[str, np.ndarray]:
        """Parameter arrays in the fixed checkpoint order."""
        return {name: getattr(self, name) for name in _PARAM_ORDER}

    def validate(self) -> None:
        shapes = _param_shapes(self.hidden_size)
        for name, arr in self.arrays().items():
            if arr.shape != shapes[name]:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shapes[name]}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")

    @classmethod
    def init(cls, seed: int, hidden: int = DEFAULT_HIDDEN) -> "ModelParameters":
        """Glorot-uniform initialization, deterministic in ``seed``.

        Each array is drawn uniformly in +-sqrt(6 / (fan_in + fan_out));
        bias vectors use the fans of their owning layer.
        """
        rng = np.random.default_rng(seed)
        fans = {
            "conv1_w": (81, 81),
            "conv1_b": (81, 81),
            "conv2_w": (25, 25),
            "conv2_b": (25, 25),
            "conv3_w": (49, 49),
            "conv3_b": (49, 49),
            "lstm_wx": (FLAT, 4 * hidden),
            "lstm_wh": (hidden, 4 * hidden),
            "lstm_b": (FLAT, 4 * hidden),
            "gru_wx": (hidden, 3 * FLAT),
            "gru_wh": (FLAT, 3 * FLAT),
            "gru_b": (hidden, 3 * FLAT),
        }
        shapes = _param_shapes(hidden)
        values = {}
        for name in _PARAM_ORDER:
            fan_in, fan_out = fans[name]
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            values[name] = rng.uniform(-limit, limit, size=shapes[name])
        return cls(**values)

    @classmethod
    def zeros(cls, hidden: int = DEFAULT_HIDDEN) -> "ModelParameters":
        return cls(**{name: np.zeros(shape) for name, shape in _param_shapes(hidden).items()})

    def copy(self) -> "ModelParameters":
        return ModelParameters(**{k: v.copy() for k, v in self.arrays().items()})


@dataclass
class ForwardTrace:
    """Activations recorded during a forward pass, consumed by the backward pass.

    f1/f2/f_res/f3 are the per-frame conv feature maps; lstm_h/lstm_c/gru_h
    the recurrent states after each step; z the per-step recurrent outputs
    (the pre-sigmoid logits); output the squashed (T, 36, 9) prediction.
    The trace keeps a reference to the parameters it was computed with.
    """

    params: "ModelParameters"
    inputs: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    f_res: np.ndarray
    f3: np.ndarray
    lstm_i: np.ndarray
    lstm_f: np.ndarray
    lstm_g: np.ndarray
    lstm_o: np.ndarray
    lstm_c: np.ndarray
    lstm_h: np.ndarray
    gru_z: np.ndarray
    gru_r: np.ndarray
    gru_n: np.ndarray
    gru_rh: np.ndarray
    gru_h: np.ndarray
    output: np.ndarray

    @property
    def z(self) -> np.ndarray:
        return self.gru_h


# Gather indices mapping a padded image to its (rows*cols, k*k) window
# matrix, cached per (shape, kernel size).  Turns each convolution into one
# gather plus one small matmul.
_WINDOW_IDX: dict[tuple[tuple[int, int], int], np.ndarray] = {}


def _window_indices(shape: tuple[int, int], k: int) -> np.ndarray:
    key = (shape, k)
    idx = _WINDOW_IDX.get(key)
    if idx is None:
        rows, cols = shape
        width = cols + 2 * (k // 2)
        origins = (np.arange(rows)[:, None] * width + np.arange(cols)[None, :]).ravel()
        offsets = (np.arange(k)[:, None] * width + np.arange(k)[None, :]).ravel()
        idx = origins[:, None] + offsets[None, :]
        _WINDOW_IDX[key] = idx
    return idx


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    p = k // 2
    rows, cols = x.shape
    padded = np.zeros((rows + 2 * p, cols + 2 * p))
    padded[p : p + rows, p : p + cols] = x
    return padded.ravel()[_window_indices(x.shape, k)]


# Scatter pattern for expanding a kernel into a dense (cells, cells)
# convolution matrix, cached per (shape, kernel size): flat positions in the
# matrix and the kernel entry that lands on each.
_SCATTER_IDX: dict[tuple[tuple[int, int], int], tuple[np.ndarray, np.ndarray]] = {}


def _scatter_indices(shape: tuple[int, int], k: int):
    key = (shape, k)
    cached = _SCATTER_IDX.get(key)
    if cached is None:
        rows, cols = shape
        p = k // 2
        cells = rows * cols
        positions = []
        taps = []
        for r in range(rows):
            for c in range(cols):
                out = r * cols + c
                for u in range(k):
                    rr = r + u - p
                    if not 0 <= rr < rows:
                        continue
                    for v in range(k):
                        cc = c + v - p
                        if 0 <= cc < cols:
                            # Transposed layout (input cell, output cell):
                            # frames stay row-major through the matmul.
                            positions.append((rr * cols + cc) * cells + out)
                            taps.append(u * k + v)
        cached = (np.array(positions), np.array(taps))
        _SCATTER_IDX[key] = cached
    return cached


def _conv_matrix(kernel: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Dense (cells, cells) matrix applying the same-padded conv as x @ m.

    The convolution is linear, so one matmul covers every frame of a
    sequence at once; entry (i, j) is the kernel tap carrying input cell i
    into output cell j.
    """
    k = kernel.shape[0]
    cells = shape[0] * shape[1]
    positions, taps = _scatter_indices(shape, k)
    m = np.zeros((cells, cells))
    m.ravel()[positions] = kernel.ravel()[taps]
    return m


def conv2d_forward(x, kernel, bias, activation: str = "none") -> np.ndarray:
    """Same-padded single-channel cross-correlation plus bias.

    ``activation`` is "relu" or "none".  The kernel must be square with odd
    size so the output shape equals the input shape.
    """
    x = np.asarray(x, dtype=float)
    kernel = np.asarray(kernel, dtype=float)
    if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1]:
        raise ValueError(f"kernel must be square, got {kernel.shape}")
    k = kernel.shape[0]
    if k % 2 == 0:
        raise ValueError(f"kernel size must be odd, got {k}")
    if activation not in ("relu", "none"):
        raise ValueError(f"unknown activation {activation!r}")
    y = (_im2col(x, k) @ kernel.ravel()).reshape(x.shape)
    y += float(bias)
    if activation == "relu":
        np.maximum(y, 0.0, out=y)
    return y


def _conv2d_backward(x, kernel, grad_out):
    """Gradients of a same-padded cross-correlation: (d_kernel, d_bias, d_input)."""
    k = kernel.shape[0]
    d_kernel = (_im2col(x, k).T @ grad_out.ravel()).reshape(k, k)
    d_bias = float(grad_out.sum())
    # d_input is the same-padded correlation of the output grad with the
    # 180-degree rotated kernel.
    d_input = (_im2col(grad_out, k) @ kernel[::-1, ::-1].ravel()).reshape(x.shape)
    return d_kernel, d_bias, d_input


def residual_add(a, b) -> np.ndarray:
    """Elementwise sum of two equally shaped maps."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a + b


def lstm_cell(x, h_prev, c_prev, wx, wh, b):
    """One LSTM step; returns (h, c).

    Gate rows of wx/wh/b are packed [input, forget, candidate, output];
    input/forget/output gates are sigmoids, the candidate is tanh.
    """
    x = np.asarray(x, dtype=float)
    h_prev = np.asarray(h_prev, dtype=float)
    c_prev = np.asarray(c_prev, dtype=float)
    hidden = h_prev.shape[0]
    if wx.shape != (4 * hidden, x.shape[0]) or wh.shape != (4 * hidden, hidden):
        raise ValueError("lstm weight shapes inconsistent with inputs")
    if b.shape != (4 * hidden,) or c_prev.shape != (hidden,):
        raise ValueError("lstm bias/state shapes inconsistent with inputs")
    gates = wx @ x + wh @ h_prev + b
    i = _sigmoid(gates[:hidden])
    f = _sigmoid(gates[hidden : 2 * hidden])
    g = np.tanh(gates[2 * hidden : 3 * hidden])
    o = _sigmoid(gates[3 * hidden :])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c


def gru_cell(x, h_prev, wx, wh, b):
    """One GRU step; returns the new hidden state.

    Gate rows are packed [update, reset, candidate].  With update gate z the
    state blends as h = (1 - z) * h_prev + z * candidate, so a update gate
    forced to zero keeps the previous state.
    """
    x = np.asarray(x, dtype=float)
    h_prev = np.asarray(h_prev, dtype=float)
    hidden = h_prev.shape[0]
    if wx.shape != (3 * hidden, x.shape[0]) or wh.shape != (3 * hidden, hidden):
        raise ValueError("gru weight shapes inconsistent with inputs")
    if b.shape != (3 * hidden,):
        raise ValueError("gru bias shape inconsistent with inputs")
    gx = wx @ x + b
    gh_zr = wh[: 2 * hidden] @ h_prev
    z = _sigmoid(gx[:hidden] + gh_zr[:hidden])
    r = _sigmoid(gx[hidden : 2 * hidden] + gh_zr[hidden:])
    n = np.tanh(gx[2 * hidden :] + wh[2 * hidden :] @ (r * h_prev))
    return (1.0 - z) * h_prev + z * n


def model_forward(input_seq, params: ModelParameters, record_trace: bool = True):
    """Run the network over a sequence of binary maps.

    Returns ``(output, trace)`` where output has shape (T, 36, 9) with values
    in (0, 1).  Recurrent state starts at zero and carries across the T
    frames.  With ``record_trace=False`` the trace is None and no
    activations are kept (used for inference and finite differencing).
    """
    x_seq = np.asarray(input_seq, dtype=float)
    if x_seq.ndim != 3 or x_seq.shape[1:] != (GRID_ROWS, GRID_COLS):
        raise ValueError(f"input must be (T, {GRID_ROWS}, {GRID_COLS}), got {x_seq.shape}")
    steps = x_seq.shape[0]
    if steps < 1:
        raise ValueError("input sequence must have at least one frame")
    if not np.all((x_seq == 0.0) | (x_seq == 1.0)):
        raise ValueError("input maps must be binary")

    conv_mats = (
        _conv_matrix(params.conv1_w, (GRID_ROWS, GRID_COLS)),
        _conv_matrix(params.conv2_w, (GRID_ROWS, GRID_COLS)),
        _conv_matrix(params.conv3_w, (GRID_ROWS, GRID_COLS)),
    )
    f1, f2, f_res, f3 = _conv_stack(x_seq, params, conv_mats)
    output, rec = _recurrent_forward(f3, params, record_trace)

    if not record_trace:
        return output, None

    trace = ForwardTrace(
        params=params,
        inputs=x_seq,
        output=output,
        f1=f1,
        f2=f2,
        f_res=f_res,
        f3=f3,
        **rec,
    )
    return output, trace


def _conv_stack(x_seq, params: ModelParameters, conv_mats):
    """Apply the three conv layers to every frame via dense matrices."""
    steps = x_seq.shape[0]
    m1, m2, m3 = conv_mats
    flat = x_seq.reshape(steps, FLAT)
    f1 = flat @ m1 + params.conv1_b[0]
    np.maximum(f1, 0.0, out=f1)
    f2 = f1 @ m2 + params.conv2_b[0]
    np.maximum(f2, 0.0, out=f2)
    f_res = f2 + f1
    f3 = f_res @ m3 + params.conv3_b[0]
    shape = (steps, GRID_ROWS, GRID_COLS)
    return f1.reshape(shape), f2.reshape(shape), f_res.reshape(shape), f3.reshape(shape)


def _recurrent_forward(f3, params: ModelParameters, record: bool, projections=None):
    """LSTM then GRU over the frame features; returns (output, trace arrays).

    The input-side projections are batched over all frames; only the
    hidden-state matvecs run sequentially.  ``projections`` may supply
    pre-transposed contiguous copies of (lstm_wx.T, gru_wx.T).
    """
    steps = f3.shape[0]
    hidden = params.hidden_size
    wh_zr = params.gru_wh[: 2 * FLAT]
    wh_n = params.gru_wh[2 * FLAT :]
    lstm_wx_t, gru_wx_t = projections if projections else (params.lstm_wx.T, params.gru_wx.T)

    lstm_in = f3.reshape(steps, FLAT) @ lstm_wx_t + params.lstm_b

    h_l = np.zeros(hidden)
    c_l = np.zeros(hidden)
    lstm_h = np.empty((steps, hidden))
    rec = (
        {
            "lstm_i": np.empty((steps, hidden)),
            "lstm_f": np.empty((steps, hidden)),
            "lstm_g": np.empty((steps, hidden)),
            "lstm_o": np.empty((steps, hidden)),
            "lstm_c": np.empty((steps, hidden)),
            "gru_z": np.empty((steps, FLAT)),
            "gru_r": np.empty((steps, FLAT)),
            "gru_n": np.empty((steps, FLAT)),
            "gru_rh": np.empty((steps, FLAT)),
        }
        if record
        else None
    )

    for t in range(steps):
        gates = lstm_in[t] + params.lstm_wh @ h_l
        inp_fgt = _sigmoid(gates[: 2 * hidden])
        i = inp_fgt[:hidden]
        f = inp_fgt[hidden:]
        g = np.tanh(gates[2 * hidden : 3 * hidden])
        o = _sigmoid(gates[3 * hidden :])
        c_l = f * c_l + i * g
        h_l = o * np.tanh(c_l)
        lstm_h[t] = h_l
        if rec is not None:
            rec["lstm_i"][t], rec["lstm_f"][t] = i, f
            rec["lstm_g"][t], rec["lstm_o"][t] = g, o
            rec["lstm_c"][t] = c_l

    gru_in = lstm_h @ gru_wx_t + params.gru_b

    h_g = np.zeros(FLAT)
    gru_h = np.empty((steps, FLAT))
    for t in range(steps):
        gx = gru_in[t]
        zr = _sigmoid(gx[: 2 * FLAT] + wh_zr @ h_g)
        z = zr[:FLAT]
        r = zr[FLAT:]
        rh = r * h_g
        n = np.tanh(gx[2 * FLAT :] + wh_n @ rh)
        h_g = (1.0 - z) * h_g + z * n
        gru_h[t] = h_g
        if rec is not None:
            rec["gru_z"][t], rec["gru_r"][t] = z, r
            rec["gru_n"][t], rec["gru_rh"][t] = n, rh

    output = _sigmoid(OUTPUT_LOGIT_SCALE * gru_h).reshape(steps, GRID_ROWS, GRID_COLS)
    if rec is not None:
        rec["lstm_h"] = lstm_h
        rec["gru_h"] = gru_h
    return output, rec


class CompiledPredictor:
    """Inference-only forward pass with the conv layers precompiled.

    The dense conv matrices depend only on the kernels, so with frozen
    parameters they are built once and reused across scenarios.  Outputs are
    identical to ``model_forward``.
    """

    def __init__(self, params: ModelParameters):
        params.validate()
        self.params = params
        self._mats = (
            _conv_matrix(params.conv1_w, (GRID_ROWS, GRID_COLS)),
            _conv_matrix(params.conv2_w, (GRID_ROWS, GRID_COLS)),
            _conv_matrix(params.conv3_w, (GRID_ROWS, GRID_COLS)),
        )
        self._projections = (
            np.ascontiguousarray(params.lstm_wx.T),
            np.ascontiguousarray(params.gru_wx.T),
        )

    def run(self, input_seq) -> np.ndarray:
        x_seq = np.asarray(input_seq, dtype=float)
        _, _, _, f3 = _conv_stack(x_seq, self.params, self._mats)
        output, _ = _recurrent_forward(f3, self.params, record=False, projections=self._projections)
        return output


def model_backward(trace: ForwardTrace, output_grad) -> dict[str, np.ndarray]:
    """Parameter gradients for a loss with the given output gradient.

    Backpropagates through the terminal sigmoid, both recurrent cells across
    all time steps (carrying state gradients between steps), the residual
    connection and the three convolutions.  Returns one gradient array per
    parameter, keyed like ``ModelParameters.arrays()``.
    """
    grad_out = np.asarray(output_grad, dtype=float)
    if grad_out.shape != trace.output.shape:
        raise ValueError(f"output_grad shape {grad_out.shape} != trace {trace.output.shape}")

    params = trace.params
    steps = trace.output.shape[0]
    hidden = trace.lstm_h.shape[1]
    grads = {name: np.zeros_like(arr) for name, arr in params.arrays().items()}

    wx_l, wh_l = params.lstm_wx, params.lstm_wh
    wx_g, wh_g = params.gru_wx, params.gru_wh
    wh_g_z = wh_g[:FLAT]
    wh_g_r = wh_g[FLAT : 2 * FLAT]
    wh_g_n = wh_g[2 * FLAT :]

    d_h_l = np.zeros(hidden)  # carries into step t from t+1
    d_c_l = np.zeros(hidden)
    d_h_g = np.zeros(FLAT)

    for t in reversed(range(steps)):
        out_t = trace.output[t].reshape(FLAT)
        d_logit = grad_out[t].reshape(FLAT) * out_t * (1.0 - out_t) * OUTPUT_LOGIT_SCALE

        # --- GRU step t ---
        z = trace.gru_z[t]
        r = trace.gru_r[t]
        n = trace.gru_n[t]
        rh = trace.gru_rh[t]
        h_g_prev = trace.gru_h[t - 1] if t > 0 else np.zeros(FLAT)
        h_l_t = trace.lstm_h[t]

        d_h = d_logit + d_h_g
        d_z = d_h * (n - h_g_prev)
        d_n = d_h * z
        d_h_g_prev = d_h * (1.0 - z)

        d_an = d_n * (1.0 - n * n)
        grads["gru_wx"][2 * FLAT :] += np.outer(d_an, h_l_t)
        grads["gru_wh"][2 * FLAT :] += np.outer(d_an, rh)
        grads["gru_b"][2 * FLAT :] += d_an
        d_rh = wh_g_n.T @ d_an
        d_r = d_rh * h_g_prev
        d_h_g_prev += d_rh * r

        d_az = d_z * z * (1.0 - z)
        d_ar = d_r * r * (1.0 - r)
        grads["gru_wx"][:FLAT] += np.outer(d_az, h_l_t)
        grads["gru_wx"][FLAT : 2 * FLAT] += np.outer(d_ar, h_l_t)
        grads["gru_wh"][:FLAT] += np.outer(d_az, h_g_prev)
        grads["gru_wh"][FLAT : 2 * FLAT] += np.outer(d_ar, h_g_prev)
        grads["gru_b"][:FLAT] += d_az
        grads["gru_b"][FLAT : 2 * FLAT] += d_ar
        d_h_g_prev += wh_g_z.T @ d_az + wh_g_r.T @ d_ar

        d_x_gru = wx_g[:FLAT].T @ d_az + wx_g[FLAT : 2 * FLAT].T @ d_ar + wx_g[2 * FLAT :].T @ d_an

        # --- LSTM step t ---
        i = trace.lstm_i[t]
        f = trace.lstm_f[t]
        g = trace.lstm_g[t]
        o = trace.lstm_o[t]
        c = trace.lstm_c[t]
        c_prev = trace.lstm_c[t - 1] if t > 0 else np.zeros(hidden)
        h_l_prev = trace.lstm_h[t - 1] if t > 0 else np.zeros(hidden)
        xf = trace.f3[t].reshape(FLAT)

        d_h_lstm = d_x_gru + d_h_l
        tc = np.tanh(c)
        d_o = d_h_lstm * tc
        d_c = d_c_l + d_h_lstm * o * (1.0 - tc * tc)
        d_f = d_c * c_prev
        d_i = d_c * g
        d_g = d_c * i
        d_c_l = d_c * f

        d_gates = np.concatenate(
            [
                d_i * i * (1.0 - i),
                d_f * f * (1.0 - f),
                d_g * (1.0 - g * g),
                d_o * o * (1.0 - o),
            ]
        )
        grads["lstm_wx"] += np.outer(d_gates, xf)
        grads["lstm_wh"] += np.outer(d_gates, h_l_prev)
        grads["lstm_b"] += d_gates
        d_h_l = wh_l.T @ d_gates
        d_xf = wx_l.T @ d_gates
        d_h_g = d_h_g_prev

        # --- convolutions, frame t ---
        d_f3 = d_xf.reshape(GRID_ROWS, GRID_COLS)
        dw3, db3, d_f_res = _conv2d_backward(trace.f_res[t], params.conv3_w, d_f3)
        grads["conv3_w"] += dw3
        grads["conv3_b"][0] += db3

        d_pre2 = d_f_res * (trace.f2[t] > 0.0)
        dw2, db2, d_f1_conv = _conv2d_backward(trace.f1[t], params.conv2_w, d_pre2)
        grads["conv2_w"] += dw2
        grads["conv2_b"][0] += db2

        d_pre1 = (d_f_res + d_f1_conv) * (trace.f1[t] > 0.0)
        dw1, db1, _ = _conv2d_backward(trace.inputs[t], params.conv1_w, d_pre1)
        grads["conv1_w"] += dw1
        grads["conv1_b"][0] += db1

    return grads


def finite_difference_check(
    params: ModelParameters,
    input_seq,
    target_seq,
    sample_count: int,
    seed: int = 0,
    eps: float = 1e-4,
) -> float:
    """Compare analytic gradients against central differences of the loss.

    The loss is the mean squared error between the forward output and
    ``target_seq``, averaged over frames.  ``sample_count`` parameters are
    sampled round-robin across the parameter arrays (so every array is
    covered once there are at least as many samples as arrays), each checked
    with a central difference of step ``eps``.  Returns the maximum relative
    error, falling back to absolute error where the analytic gradient is
    below 1e-8.
    """
    if sample_count < 1:
        raise ValueError(f"sample_count must be >= 1, got {sample_count}")
    targets = np.asarray(target_seq, dtype=float)

    output, trace = model_forward(input_seq, params)
    if targets.shape != output.shape:
        raise ValueError(f"target shape {targets.shape} != output {output.shape}")
    d_out = 2.0 * (output - targets) / output.size
    grads = model_backward(trace, d_out)

    def loss_at() -> float:
        out, _ = model_forward(input_seq, params, record_trace=False)
        return float(np.mean((out - targets) ** 2))

    rng = np.random.default_rng(seed)
    names = list(params.arrays())
    arrays = params.arrays()
    worst = 0.0
    for k in range(sample_count):
        name = names[k % len(names)]
        arr = arrays[name]
        idx = int(rng.integers(arr.size))
        original = arr.flat[idx]
        arr.flat[idx] = original + eps
        loss_plus = loss_at()
        arr.flat[idx] = original - eps
        loss_minus = loss_at()
        arr.flat[idx] = original
        numeric = (loss_plus - loss_minus) / (2.0 * eps)
        analytic = grads[name].flat[idx]
        if abs(analytic) < 1e-8:
            err = abs(analytic - numeric)
        else:
            err = abs(analytic - numeric) / abs(analytic)
        worst = max(worst, err)
    return worst


def save_checkpoint(path, params: ModelParameters, trained_horizon: int = 0) -> None:
    """Write parameters as magic, u32 hidden size, u32 trained horizon, then
    each array in the fixed order as a u64 element count plus row-major f64,
    all little-endian."""
    params.validate()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", params.hidden_size, trained_horizon))
        for arr in params.arrays().values():
            data = np.ascontiguousarray(arr, dtype="<f8")
            fh.write(struct.pack("<Q", data.size))
            fh.write(data.tobytes())


def load_checkpoint(path):
    """Read a checkpoint; returns (params, trained_horizon)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(CHECKPOINT_MAGIC) + 8 or blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ValueError("not a model checkpoint (bad magic)")
    offset = len(CHECKPOINT_MAGIC)
    hidden, horizon = struct.unpack_from("<II", blob, offset)
    offset += 8
    shapes = _param_shapes(hidden)
    values = {}
    for name in _PARAM_ORDER:
        shape = shapes[name]
        expected = int(np.prod(shape))
        if offset + 8 > len(blob):
            raise ValueError(f"checkpoint truncated before {name}")
        (count,) = struct.unpack_from("<Q", blob, offset)
        offset += 8
        if count != expected:
            raise ValueError(f"{name} has {count} elements, expected {expected}")
        end = offset + 8 * expected
        if end > len(blob):
            raise ValueError(f"checkpoint truncated inside {name}")
        values[name] = np.frombuffer(blob[offset:end], dtype="<f8").astype(float).reshape(shape)
        offset = end
    if offset != len(blob):
        raise ValueError("trailing bytes after the last parameter array")
    params = ModelParameters(**values)
    params.validate()
    return params, horizon
