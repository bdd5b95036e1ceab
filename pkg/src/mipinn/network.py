"""Dense tanh networks with exact input-derivative rails and parameter gradients.

The solver needs, at every collocation point, not just u_theta but selected
entries of its input-derivative jet (time derivative, spatial gradient,
second derivatives along chosen index pairs) together with the gradient of
every one of those quantities with respect to the flat parameter vector.
All of it is computed here in closed form with numpy:

  forward rails   x^{l+1} = tanh(W x^l + b),  value from the affine output layer
                  g_k: tangent of x^l along input k     (first order)
                  h_p: second-order rail for index pair p=(i,j)
  adjoint rails   reverse sweeps seeded at the output layer give
                  d(value)/d(theta), d(du/dx_k)/d(theta), d(d2u/dx_i dx_j)/d(theta)

Shapes are batched: value (B, F), first (B, nin, F), second (B, npairs, F),
parameter blocks carry a trailing axis of size param_count.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "MlpParams",
    "JetRequest",
    "NetworkJet",
    "init_mlp",
    "forward_jet",
    "param_count",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_VERSION = 1


def param_count(layer_dims: Sequence[int]) -> int:
    dims = list(layer_dims)
    if len(dims) < 2:
        raise ValueError("layer_dims needs at least an input and an output layer")
    return sum(dims[l + 1] * dims[l] + dims[l + 1] for l in range(len(dims) - 1))


@dataclass(frozen=True)
class MlpParams:
    """Weights/biases of a fully connected tanh network.

    weights[l] has shape (layer_dims[l+1], layer_dims[l]); the last layer is
    affine (no activation). The flat layout is the concatenation, layer by
    layer, of W.ravel() followed by b.
    """

    layer_dims: tuple
    weights: tuple
    biases: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) < 2 or any(d <= 0 for d in dims):
            raise ValueError(f"invalid layer_dims {dims}")
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ValueError("weights/biases length must be len(layer_dims)-1")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[l + 1], dims[l]) or b.shape != (dims[l + 1],):
                raise ValueError(f"layer {l}: bad shapes {w.shape}, {b.shape}")
        object.__setattr__(self, "layer_dims", dims)

    @property
    def n_inputs(self) -> int:
        return self.layer_dims[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_dims[-1]

    @property
    def param_count(self) -> int:
        return param_count(self.layer_dims)

    def to_flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    @classmethod
    def from_flat(cls, layer_dims: Sequence[int], theta: np.ndarray) -> "MlpParams":
        dims = tuple(int(d) for d in layer_dims)
        theta = np.asarray(theta, dtype=np.float64).ravel()
        expected = param_count(dims)
        if theta.size != expected:
            raise ValueError(
                f"flat parameter vector has {theta.size} entries, layer_dims {dims} needs {expected}"
            )
        weights, biases, off = [], [], 0
        for l in range(len(dims) - 1):
            nout, nin = dims[l + 1], dims[l]
            weights.append(theta[off : off + nout * nin].reshape(nout, nin).copy())
            off += nout * nin
            biases.append(theta[off : off + nout].copy())
            off += nout
        return cls(dims, tuple(weights), tuple(biases))

    def replace_flat(self, theta: np.ndarray) -> "MlpParams":
        return MlpParams.from_flat(self.layer_dims, theta)


def init_mlp(layer_dims: Sequence[int], seed: int) -> MlpParams:
    """Normal weights scaled by 1/sqrt(fan_in), zero biases, Philox stream."""
    dims = tuple(int(d) for d in layer_dims)
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    weights, biases = [], []
    for l in range(len(dims) - 1):
        nout, nin = dims[l + 1], dims[l]
        weights.append(rng.standard_normal((nout, nin)) / np.sqrt(nin))
        biases.append(np.zeros(nout))
    return MlpParams(dims, tuple(weights), tuple(biases))


@dataclass(frozen=True)
class JetRequest:
    """Which derivative blocks forward_jet should return.

    pairs lists (i, j) input-index pairs for second derivatives; order is
    preserved in the output. param_* ask for the theta-gradient of the
    corresponding block.
    """

    first: bool = False
    pairs: tuple = ()
    param_value: bool = False
    param_first: bool = False
    param_pairs: bool = False

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple((int(i), int(j)) for i, j in self.pairs))

    @property
    def needs_first_rails(self) -> bool:
        return self.first or bool(self.pairs) or self.param_first or self.param_pairs

    @property
    def needs_params(self) -> bool:
        return self.param_value or self.param_first or self.param_pairs


@dataclass
class NetworkJet:
    """Evaluated jet; blocks not requested are None."""

    value: np.ndarray                     # (B, F)
    first: Optional[np.ndarray] = None    # (B, nin, F)
    second: Optional[np.ndarray] = None   # (B, npairs, F)
    pairs: tuple = ()
    param_value: Optional[np.ndarray] = None   # (B, F, P)
    param_first: Optional[np.ndarray] = None   # (B, nin, F, P)
    param_second: Optional[np.ndarray] = None  # (B, npairs, F, P)

    def pair_index(self, i: int, j: int) -> int:
        try:
            return self.pairs.index((i, j))
        except ValueError:
            try:
                return self.pairs.index((j, i))
            except ValueError:
                raise KeyError(f"second-derivative pair ({i},{j}) was not requested") from None


def _tanh_derivs(a: np.ndarray):
    t = np.tanh(a)
    s1 = 1.0 - t * t
    s2 = -2.0 * t * s1
    s3 = -2.0 * (s1 * s1 + t * s2)
    return t, s1, s2, s3


def _param_offsets(dims):
    offs, off = [], 0
    for l in range(len(dims) - 1):
        nout, nin = dims[l + 1], dims[l]
        offs.append((off, off + nout * nin))
        off += nout * nin + nout
    return offs


def forward_jet(params: MlpParams, x: np.ndarray, request: JetRequest = JetRequest()) -> NetworkJet:
    """Evaluate the network and the requested derivative blocks at points x.

    x: (B, nin). Validates pair indices against nin. All computation is
    float64; no derivative is approximated.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.n_inputs:
        raise ValueError(f"x must be (B, {params.n_inputs}), got {x.shape}")
    dims = params.layer_dims
    nin = dims[0]
    for (i, j) in request.pairs:
        if not (0 <= i < nin and 0 <= j < nin):
            raise ValueError(f"pair ({i},{j}) out of range for {nin} inputs")

    B = x.shape[0]
    n_hidden = len(params.weights) - 1
    w_out, b_out = params.weights[-1], params.biases[-1]
    F = dims[-1]
    pairs = request.pairs
    npairs = len(pairs)
    need_first = request.needs_first_rails
    need_pairs = bool(pairs)
    keep = request.needs_params

    xs = [x]                       # layer inputs, xs[h] feeds layer h
    s1s, s2s, s3s = [], [], []
    p_rails, g_in = [], []
    q_rails, h_in = [], []

    g = None
    if need_first:
        g = np.broadcast_to(np.eye(nin), (B, nin, nin)).copy()
    h = None
    if need_pairs:
        h = np.zeros((B, npairs, nin))

    cur = x
    for lh in range(n_hidden):
        w, b = params.weights[lh], params.biases[lh]
        a = cur @ w.T + b
        t, s1, s2, s3 = _tanh_derivs(a)
        if need_first:
            p = np.einsum("bki,oi->bko", g, w)
            if need_pairs:
                q = np.einsum("bpi,oi->bpo", h, w)
                pi = p[:, [i for i, _ in pairs], :]
                pj = p[:, [j for _, j in pairs], :]
                h_next = s2[:, None, :] * (pi * pj) + s1[:, None, :] * q
            g_next = s1[:, None, :] * p
        if keep:
            s1s.append(s1); s2s.append(s2); s3s.append(s3)
            if need_first:
                g_in.append(g); p_rails.append(p)
            if need_pairs:
                h_in.append(h); q_rails.append(q)
        if need_first:
            g = g_next
        if need_pairs:
            h = h_next
        cur = t
        xs.append(cur)

    jet = NetworkJet(value=cur @ w_out.T + b_out, pairs=pairs)
    if request.first:
        jet.first = np.einsum("bki,oi->bko", g, w_out)
    if need_pairs:
        jet.second = np.einsum("bpi,oi->bpo", h, w_out)

    if not keep:
        return jet

    P = params.param_count
    offs = _param_offsets(dims)
    w_bcast = np.broadcast_to(w_out, (B, F, dims[-2]))

    def sweep(top_w_seed, top_adjoints, out):
        """Reverse sweep for one functional family.

        top_w_seed: (B, n_last) seed for the output-layer weight rows
        top_adjoints: dict with optional keys s, lam (dict rail->arr), mu
        out: (B, F, P) written in place.
        """
        ow0, ow1 = offs[-1]
        n_last = dims[-2]
        for f in range(F):
            out[:, f, ow0 + f * n_last : ow0 + (f + 1) * n_last] = top_w_seed
        if top_adjoints.get("bias_seed", False):
            for f in range(F):
                out[:, f, ow1 + f] = 1.0
        s = top_adjoints.get("s")
        lam_i = top_adjoints.get("lam_i")
        lam_j = top_adjoints.get("lam_j")
        mu = top_adjoints.get("mu")
        rail_i = top_adjoints.get("rail_i")
        rail_j = top_adjoints.get("rail_j")
        pair_idx = top_adjoints.get("pair_idx")
        for lh in range(n_hidden - 1, -1, -1):
            w = params.weights[lh]
            s1 = s1s[lh][:, None, :]
            s2 = s2s[lh][:, None, :]
            da = 0.0
            if s is not None:
                da = s * s1
            if mu is not None:
                s3 = s3s[lh][:, None, :]
                p_i = p_rails[lh][:, rail_i, :][:, None, :]
                p_j = p_rails[lh][:, rail_j, :][:, None, :]
                q = q_rails[lh][:, pair_idx, :][:, None, :]
                dq = mu * s1
                dpi = mu * s2 * p_j
                dpj = mu * s2 * p_i
                if lam_i is not None:
                    dpi = dpi + lam_i * s1
                if lam_j is not None:
                    dpj = dpj + lam_j * s1
                da = da + mu * (s3 * (p_i * p_j) + s2 * q)
                if lam_i is not None:
                    da = da + lam_i * s2 * p_i
                if lam_j is not None:
                    da = da + lam_j * s2 * p_j
            elif lam_i is not None:
                p_i = p_rails[lh][:, rail_i, :][:, None, :]
                dpi = lam_i * s1
                da = da + lam_i * s2 * p_i
                dpj = None
                dq = None
            else:
                dpi = dpj = dq = None
            w0, w1 = offs[lh]
            gw = np.einsum("bfo,bi->bfoi", da, xs[lh])
            if dpi is not None:
                gw += np.einsum("bfo,bi->bfoi", dpi, g_in[lh][:, rail_i, :])
            if mu is not None:
                gw += np.einsum("bfo,bi->bfoi", dpj, g_in[lh][:, rail_j, :])
                gw += np.einsum("bfo,bi->bfoi", dq, h_in[lh][:, pair_idx, :])
            out[:, :, w0:w1] = gw.reshape(B, F, -1)
            out[:, :, w1 : w1 + dims[lh + 1]] = da
            s = np.einsum("bfo,oi->bfi", da, w)
            if dpi is not None:
                lam_i = np.einsum("bfo,oi->bfi", dpi, w)
            if mu is not None:
                lam_j = np.einsum("bfo,oi->bfi", dpj, w)
                mu = np.einsum("bfo,oi->bfi", dq, w)

    if request.param_value:
        out = np.zeros((B, F, P))
        sweep(xs[n_hidden], {"s": w_bcast, "bias_seed": True}, out)
        jet.param_value = out

    if request.param_first:
        outk = np.zeros((B, nin, F, P))
        for k in range(nin):
            seed = g[:, k, :] if n_hidden > 0 else np.broadcast_to(np.eye(nin)[k], (B, nin))
            sweep(seed, {"lam_i": w_bcast, "rail_i": k}, outk[:, k])
        jet.param_first = outk

    if request.param_pairs and need_pairs:
        outp = np.zeros((B, npairs, F, P))
        for p_idx, (i, j) in enumerate(pairs):
            seed = h[:, p_idx, :] if n_hidden > 0 else np.zeros((B, nin))
            sweep(
                seed,
                {"mu": w_bcast, "rail_i": i, "rail_j": j, "pair_idx": p_idx},
                outp[:, p_idx],
            )
        jet.param_second = outp

    return jet


def save_checkpoint(path, params: MlpParams, extra: Optional[dict] = None) -> None:
    """Versioned npz checkpoint: layer dims plus the flat parameter vector."""
    payload = {
        "format_version": np.int64(CHECKPOINT_VERSION),
        "layer_dims": np.asarray(params.layer_dims, dtype=np.int64),
        "theta": params.to_flat(),
    }
    if extra:
        for k, v in extra.items():
            if k in payload:
                raise ValueError(f"extra key {k!r} collides with a checkpoint field")
            payload[k] = np.asarray(v)
    np.savez(path, **payload)


def load_checkpoint(path):
    """Returns (MlpParams, extras dict). Rejects unknown format versions."""
    with np.load(path, allow_pickle=False) as data:
        version = int(data["format_version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint format version {version}")
        dims = tuple(int(d) for d in data["layer_dims"])
        params = MlpParams.from_flat(dims, data["theta"])
        extras = {
            k: np.array(data[k])
            for k in data.files
            if k not in ("format_version", "layer_dims", "theta")
        }
    return params, extras
