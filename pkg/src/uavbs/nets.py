"""Fixed-topology dense networks with hand-written backpropagation, plus the
diagonal-Gaussian action distribution.

Two topologies only: a Gaussian policy (tanh trunk with mean and log-std
heads) and a scalar value net. Both expose their parameters as one flat
float64 vector so that natural-gradient algebra can treat them as vectors.
"""

import json
import struct
from dataclasses import dataclass

import numpy as np

from .validation import check_finite_array

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0

_CKPT_MAGIC = b"UVBSNET\x00"
_CKPT_VERSION = 1


def _uniform_fan_in(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def flatten_arrays(arrays):
    """Concatenate a list of arrays into one flat float64 vector."""
    return np.concatenate([np.asarray(a, dtype=float).ravel() for a in arrays])


def unflatten_vector(flat, shapes):
    """Split a flat vector back into arrays of the given shapes (exact inverse
    of :func:`flatten_arrays`)."""
    flat = np.asarray(flat, dtype=float)
    out, offset = [], 0
    for shape in shapes:
        size = int(np.prod(shape))
        out.append(flat[offset:offset + size].reshape(shape))
        offset += size
    if offset != flat.size:
        raise ValueError(f"flat vector has {flat.size} entries, shapes need {offset}")
    return out


@dataclass
class DiagGaussian:
    """Gaussian with diagonal covariance, parametrized by mean and log-std.

    Fields may carry a leading batch axis; reductions are over the last axis.
    """

    mean: np.ndarray
    log_std: np.ndarray

    @property
    def std(self):
        return np.exp(self.log_std)

    def sample(self, rng: np.random.Generator):
        return self.mean + self.std * rng.standard_normal(np.shape(self.mean))

    def log_prob(self, action):
        action = np.asarray(action, dtype=float)
        z = (action - self.mean) / self.std
        dim = self.mean.shape[-1]
        return (-0.5 * np.sum(z * z, axis=-1)
                - np.sum(self.log_std, axis=-1)
                - 0.5 * dim * np.log(2.0 * np.pi))

    def entropy(self):
        return np.sum(self.log_std + 0.5 * np.log(2.0 * np.pi * np.e), axis=-1)

    def kl_to(self, other: "DiagGaussian"):
        """KL(self || other), closed form, reduced over the action axis."""
        var_p = np.exp(2.0 * self.log_std)
        var_q = np.exp(2.0 * other.log_std)
        return np.sum(
            other.log_std - self.log_std
            + (var_p + (self.mean - other.mean) ** 2) / (2.0 * var_q)
            - 0.5,
            axis=-1,
        )


def log_prob_grads(dist: DiagGaussian, action):
    """Per-sample gradients of log_prob w.r.t. the distribution outputs.

    Returns (d/d mean, d/d log_std), each with the shape of ``mean``.
    """
    action = np.asarray(action, dtype=float)
    inv_var = np.exp(-2.0 * dist.log_std)
    diff = action - dist.mean
    dmean = diff * inv_var
    dlog_std = (diff * diff) * inv_var - 1.0
    return dmean, dlog_std


def kl_grads_wrt_q(p: DiagGaussian, q: DiagGaussian):
    """Per-sample gradients of KL(p || q) w.r.t. q's outputs (mean, log_std)."""
    var_p = np.exp(2.0 * p.log_std)
    var_q = np.exp(2.0 * q.log_std)
    diff = q.mean - p.mean
    dmean = diff / var_q
    dlog_std = 1.0 - (var_p + diff * diff) / var_q
    return dmean, dlog_std


class GaussianPolicy:
    """S -> H1 -> H2 tanh trunk with linear mean and log-std heads (H2 -> B).

    log-std outputs are clamped to [LOG_STD_MIN, LOG_STD_MAX]; the clamp acts
    as a hard gate in the backward pass.
    """

    def __init__(self, state_dim, action_dim, hidden=(400, 300), rng=None):
        self.state_dim = int(state_dim)
        self.action_dim = int(action_dim)
        if len(hidden) != 2:
            raise ValueError("policy trunk has exactly two hidden layers")
        self.hidden = (int(hidden[0]), int(hidden[1]))
        s, h1, h2, b = self.state_dim, *self.hidden, self.action_dim
        self.shapes = [(s, h1), (h1,), (h1, h2), (h2,), (h2, b), (b,), (h2, b), (b,)]
        if rng is None:
            self.layers = [np.zeros(shape) for shape in self.shapes]
        else:
            w1 = _uniform_fan_in(rng, s, (s, h1))
            b1 = _uniform_fan_in(rng, s, (h1,))
            w2 = _uniform_fan_in(rng, h1, (h1, h2))
            b2 = _uniform_fan_in(rng, h1, (h2,))
            wm = _uniform_fan_in(rng, h2, (h2, b)) * 0.01  # small initial actions
            bm = _uniform_fan_in(rng, h2, (b,)) * 0.01
            ws = _uniform_fan_in(rng, h2, (h2, b))
            bs = np.full(b, -0.5)  # moderate initial exploration noise
            self.layers = [w1, b1, w2, b2, wm, bm, ws, bs]

    @property
    def param_count(self):
        return sum(int(np.prod(s)) for s in self.shapes)

    def get_flat(self):
        return flatten_arrays(self.layers)

    def set_flat(self, flat):
        self.layers = unflatten_vector(flat, self.shapes)

    def forward_cached(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        w1, b1, w2, b2, wm, bm, ws, bs = self.layers
        h1 = np.tanh(x @ w1 + b1)
        h2 = np.tanh(h1 @ w2 + b2)
        mean = h2 @ wm + bm
        z_s = h2 @ ws + bs
        log_std = np.clip(z_s, LOG_STD_MIN, LOG_STD_MAX)
        clip_mask = (z_s > LOG_STD_MIN) & (z_s < LOG_STD_MAX)
        cache = (x, h1, h2, clip_mask)
        return mean, log_std, cache

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        mean, log_std, _ = self.forward_cached(x)
        if single:
            return mean[0], log_std[0]
        return mean, log_std

    def distribution(self, x) -> DiagGaussian:
        mean, log_std = self.forward(x)
        return DiagGaussian(mean=mean, log_std=log_std)

    def backward(self, cache, dmean, dlog_std):
        """Flat gradient of sum_n (dmean_n . mean_n + dlog_std_n . log_std_n)."""
        x, h1, h2, clip_mask = cache
        w1, b1, w2, b2, wm, bm, ws, bs = self.layers
        dmean = np.atleast_2d(dmean)
        dzs = np.atleast_2d(dlog_std) * clip_mask
        gwm = h2.T @ dmean
        gbm = dmean.sum(axis=0)
        gws = h2.T @ dzs
        gbs = dzs.sum(axis=0)
        dh2 = dmean @ wm.T + dzs @ ws.T
        dz2 = dh2 * (1.0 - h2 * h2)
        gw2 = h1.T @ dz2
        gb2 = dz2.sum(axis=0)
        dh1 = dz2 @ w2.T
        dz1 = dh1 * (1.0 - h1 * h1)
        gw1 = x.T @ dz1
        gb1 = dz1.sum(axis=0)
        return flatten_arrays([gw1, gb1, gw2, gb2, gwm, gbm, gws, gbs])

    def jvp(self, cache, v_flat):
        """Directional derivative of (mean, log_std) along parameter tangent v."""
        x, h1, h2, clip_mask = cache
        w1, b1, w2, b2, wm, bm, ws, bs = self.layers
        vw1, vb1, vw2, vb2, vwm, vbm, vws, vbs = unflatten_vector(v_flat, self.shapes)
        t1 = (x @ vw1 + vb1) * (1.0 - h1 * h1)
        t2 = (h1 @ vw2 + vb2 + t1 @ w2) * (1.0 - h2 * h2)
        dmean = h2 @ vwm + vbm + t2 @ wm
        dlog_std = (h2 @ vws + vbs + t2 @ ws) * clip_mask
        return dmean, dlog_std


class ValueNet:
    """S -> H1 -> H2 -> 1 tanh trunk with a linear scalar head."""

    def __init__(self, state_dim, hidden=(400, 300), rng=None):
        self.state_dim = int(state_dim)
        if len(hidden) != 2:
            raise ValueError("value trunk has exactly two hidden layers")
        self.hidden = (int(hidden[0]), int(hidden[1]))
        s, h1, h2 = self.state_dim, *self.hidden
        self.shapes = [(s, h1), (h1,), (h1, h2), (h2,), (h2, 1), (1,)]
        if rng is None:
            self.layers = [np.zeros(shape) for shape in self.shapes]
        else:
            w1 = _uniform_fan_in(rng, s, (s, h1))
            b1 = _uniform_fan_in(rng, s, (h1,))
            w2 = _uniform_fan_in(rng, h1, (h1, h2))
            b2 = _uniform_fan_in(rng, h1, (h2,))
            w3 = _uniform_fan_in(rng, h2, (h2, 1))
            b3 = _uniform_fan_in(rng, h2, (1,))
            self.layers = [w1, b1, w2, b2, w3, b3]

    @property
    def param_count(self):
        return sum(int(np.prod(s)) for s in self.shapes)

    def get_flat(self):
        return flatten_arrays(self.layers)

    def set_flat(self, flat):
        self.layers = unflatten_vector(flat, self.shapes)

    def forward_cached(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        w1, b1, w2, b2, w3, b3 = self.layers
        h1 = np.tanh(x @ w1 + b1)
        h2 = np.tanh(h1 @ w2 + b2)
        v = (h2 @ w3 + b3)[:, 0]
        return v, (x, h1, h2)

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        v, _ = self.forward_cached(x)
        return float(v[0]) if single else v

    def backward(self, cache, dout):
        """Flat gradient of sum_n dout_n * V(x_n)."""
        x, h1, h2 = cache
        w1, b1, w2, b2, w3, b3 = self.layers
        dv = np.asarray(dout, dtype=float).reshape(-1, 1)
        gw3 = h2.T @ dv
        gb3 = dv.sum(axis=0)
        dh2 = dv @ w3.T
        dz2 = dh2 * (1.0 - h2 * h2)
        gw2 = h1.T @ dz2
        gb2 = dz2.sum(axis=0)
        dh1 = dz2 @ w2.T
        dz1 = dh1 * (1.0 - h1 * h1)
        gw1 = x.T @ dz1
        gb1 = dz1.sum(axis=0)
        return flatten_arrays([gw1, gb1, gw2, gb2, gw3, gb3])


def save_checkpoint(path, policy: GaussianPolicy, value: ValueNet,
                    iteration: int, seed: int):
    """Write both networks to ``path``.

    Layout: 8-byte magic, uint32 format version, uint32 header length, JSON
    header (dims, layer tables, iteration, seed), then the policy and value
    flat parameter vectors as little-endian float64.
    """
    header = {
        "state_dim": policy.state_dim,
        "action_dim": policy.action_dim,
        "policy_hidden": list(policy.hidden),
        "value_hidden": list(value.hidden),
        "iteration": int(iteration),
        "seed": int(seed),
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<II", _CKPT_VERSION, len(blob)))
        fh.write(blob)
        fh.write(policy.get_flat().astype("<f8").tobytes())
        fh.write(value.get_flat().astype("<f8").tobytes())


def load_checkpoint(path):
    """Read a checkpoint written by :func:`save_checkpoint`.

    Returns (policy, value, header). Rejects unknown magic/version and
    truncated parameter payloads.
    """
    with open(path, "rb") as fh:
        magic = fh.read(len(_CKPT_MAGIC))
        if magic != _CKPT_MAGIC:
            raise ValueError(f"{path}: not a network checkpoint")
        version, header_len = struct.unpack("<II", fh.read(8))
        if version != _CKPT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(fh.read(header_len).decode())
        policy = GaussianPolicy(header["state_dim"], header["action_dim"],
                                hidden=tuple(header["policy_hidden"]))
        value = ValueNet(header["state_dim"], hidden=tuple(header["value_hidden"]))
        payload = np.frombuffer(fh.read(), dtype="<f8")
    expected = policy.param_count + value.param_count
    if payload.size != expected:
        raise ValueError(f"{path}: expected {expected} parameters, found {payload.size}")
    policy.set_flat(check_finite_array(payload[:policy.param_count], "policy parameters"))
    value.set_flat(check_finite_array(payload[policy.param_count:], "value parameters"))
    return policy, value, header
