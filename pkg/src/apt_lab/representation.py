"""Contrastive encoder and projection networks with hand-written backprop.

The encoder is an ELU MLP whose last linear layer is followed by layer
normalisation and ``tanh``, so latents live in ``(-1, 1)^latent_dim``.
The projection head is a two-layer ELU MLP.  Projected vectors are
L2-normalised before the contrastive loss (cosine similarity, as in
SimCLR), which keeps the loss bounded below.

Checkpoint layout (all integers little-endian)::

    offset  size  field
    0       8     magic b"APTLABCK"
    8       4     uint32 format version (1)
    12      4     uint32 length L of the architecture descriptor
    16      L     UTF-8 JSON descriptor: {"encoder": {...}, "projection": {...}}
    16+L    8*N   float64 parameters, encoder then projection, each in
                  declaration order (see ``param_names``), arrays row-major
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .geometry import as_points

LN_VAR_FLOOR = 1e-6
NORM_FLOOR = 1e-12
CHECKPOINT_MAGIC = b"APTLABCK"
CHECKPOINT_VERSION = 1


def elu(a):
    return np.where(a > 0, a, np.expm1(np.minimum(a, 0.0)))


def _elu_grad(a):
    return np.where(a > 0, 1.0, np.exp(np.minimum(a, 0.0)))


def _dense_init(rng, fan_in, fan_out):
    w = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))
    return w, np.zeros(fan_out)


@dataclass
class EncoderParams:
    in_dim: int
    hidden: tuple = (64, 64)
    latent_dim: int = 5
    params: dict = field(default_factory=dict)

    @property
    def widths(self):
        return (self.in_dim, *self.hidden, self.latent_dim)

    def param_names(self):
        names = []
        for i in range(len(self.widths) - 1):
            names += [f"W{i}", f"b{i}"]
        return names + ["ln_gain", "ln_bias"]

    def descriptor(self):
        return {"in_dim": self.in_dim, "hidden": list(self.hidden), "latent_dim": self.latent_dim}

    def copy(self):
        return EncoderParams(self.in_dim, self.hidden, self.latent_dim,
                             {k: v.copy() for k, v in self.params.items()})


@dataclass
class ProjectionParams:
    in_dim: int
    hidden: int = 128
    out_dim: int = 64
    params: dict = field(default_factory=dict)

    def param_names(self):
        return ["P0", "c0", "P1", "c1"]

    def descriptor(self):
        return {"in_dim": self.in_dim, "hidden": self.hidden, "out_dim": self.out_dim}

    def copy(self):
        return ProjectionParams(self.in_dim, self.hidden, self.out_dim,
                                {k: v.copy() for k, v in self.params.items()})


def init_encoder(in_dim, hidden=(64, 64), latent_dim=5, rng=None) -> EncoderParams:
    hidden = tuple(int(h) for h in hidden)
    if in_dim < 1 or latent_dim < 1 or any(h < 1 for h in hidden):
        raise ValueError("all layer widths must be >= 1")
    rng = np.random.default_rng(rng)
    enc = EncoderParams(int(in_dim), hidden, int(latent_dim))
    widths = enc.widths
    for i in range(len(widths) - 1):
        enc.params[f"W{i}"], enc.params[f"b{i}"] = _dense_init(rng, widths[i], widths[i + 1])
    enc.params["ln_gain"] = np.ones(latent_dim)
    enc.params["ln_bias"] = np.zeros(latent_dim)
    return enc


def init_projection(in_dim, hidden=128, out_dim=64, rng=None) -> ProjectionParams:
    if min(in_dim, hidden, out_dim) < 1:
        raise ValueError("all layer widths must be >= 1")
    rng = np.random.default_rng(rng)
    proj = ProjectionParams(int(in_dim), int(hidden), int(out_dim))
    proj.params["P0"], proj.params["c0"] = _dense_init(rng, in_dim, hidden)
    proj.params["P1"], proj.params["c1"] = _dense_init(rng, hidden, out_dim)
    return proj


class IdentityEncoder:
    """Latents are the observations themselves."""

    def __init__(self, in_dim):
        self.in_dim = self.latent_dim = int(in_dim)

    def encode(self, obs):
        return obs.copy()


class RandomProjectionEncoder:
    """Fixed Gaussian linear map, never trained."""

    def __init__(self, in_dim, latent_dim=5, seed=0):
        self.in_dim = int(in_dim)
        self.latent_dim = int(latent_dim)
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.matrix = rng.normal(0.0, 1.0 / np.sqrt(in_dim), size=(in_dim, latent_dim))

    def encode(self, obs):
        return obs @ self.matrix


def _encoder_forward(enc: EncoderParams, x):
    p = enc.params
    n_layers = len(enc.widths) - 1
    cache = {"inputs": [], "pre": []}
    h = x
    for i in range(n_layers - 1):
        cache["inputs"].append(h)
        a = h @ p[f"W{i}"] + p[f"b{i}"]
        cache["pre"].append(a)
        h = elu(a)
    cache["inputs"].append(h)
    a = h @ p[f"W{n_layers - 1}"] + p[f"b{n_layers - 1}"]
    mu = a.mean(axis=1, keepdims=True)
    var = a.var(axis=1, keepdims=True)
    floored = var < LN_VAR_FLOOR
    sigma = np.sqrt(np.maximum(var, LN_VAR_FLOOR))
    xhat = (a - mu) / sigma
    z = np.tanh(p["ln_gain"] * xhat + p["ln_bias"])
    cache.update(xhat=xhat, sigma=sigma, floored=floored, z=z)
    return z, cache


def _encoder_backward(enc: EncoderParams, cache, dz):
    p = enc.params
    n_layers = len(enc.widths) - 1
    grads = {}
    z, xhat, sigma = cache["z"], cache["xhat"], cache["sigma"]
    dy = dz * (1.0 - z * z)
    grads["ln_gain"] = (dy * xhat).sum(axis=0)
    grads["ln_bias"] = dy.sum(axis=0)
    dxhat = dy * p["ln_gain"]
    proj = np.where(cache["floored"], 0.0, (dxhat * xhat).mean(axis=1, keepdims=True))
    da = (dxhat - dxhat.mean(axis=1, keepdims=True) - xhat * proj) / sigma
    for i in range(n_layers - 1, -1, -1):
        h = cache["inputs"][i]
        grads[f"W{i}"] = h.T @ da
        grads[f"b{i}"] = da.sum(axis=0)
        if i > 0:
            da = (da @ p[f"W{i}"].T) * _elu_grad(cache["pre"][i - 1])
    return grads


def _projection_forward(proj: ProjectionParams, z):
    p = proj.params
    a = z @ p["P0"] + p["c0"]
    h = elu(a)
    out = h @ p["P1"] + p["c1"]
    norm = np.maximum(np.linalg.norm(out, axis=1, keepdims=True), NORM_FLOOR)
    u = out / norm
    return u, {"z": z, "a": a, "h": h, "norm": norm, "u": u}


def _projection_backward(proj: ProjectionParams, cache, du):
    p = proj.params
    u = cache["u"]
    dout = (du - u * (u * du).sum(axis=1, keepdims=True)) / cache["norm"]
    grads = {"P1": cache["h"].T @ dout, "c1": dout.sum(axis=0)}
    da = (dout @ p["P1"].T) * _elu_grad(cache["a"])
    grads["P0"] = cache["z"].T @ da
    grads["c0"] = da.sum(axis=0)
    dz = da @ p["P0"].T
    return grads, dz


def encode(encoder, obs_batch) -> np.ndarray:
    """Map a batch of observations to latent particles."""
    obs = as_points(obs_batch, "obs_batch")
    if obs.shape[1] != encoder.in_dim:
        raise ValueError(f"observation dim {obs.shape[1]} != encoder input dim {encoder.in_dim}")
    if isinstance(encoder, EncoderParams):
        return _encoder_forward(encoder, obs)[0]
    return encoder.encode(obs)


def project(encoder: EncoderParams, projection: ProjectionParams, obs_batch) -> np.ndarray:
    """Unit-norm projected vectors for a batch of observations."""
    return _projection_forward(projection, encode(encoder, obs_batch))[0]


@dataclass(frozen=True)
class AugmentConfig:
    gaussian_sigma: float = 0.1
    coord_shift: float = 0.0

    def __post_init__(self):
        if self.gaussian_sigma < 0 or self.coord_shift < 0:
            raise ValueError("augmentation scales must be nonnegative")


def augment(obs_batch, config: AugmentConfig, rng) -> np.ndarray:
    """Gaussian jitter plus a uniform shift on every coordinate."""
    obs = np.asarray(obs_batch, dtype=np.float64)
    out = obs.copy()
    if config.gaussian_sigma > 0:
        out += rng.normal(0.0, config.gaussian_sigma, size=obs.shape)
    if config.coord_shift > 0:
        out += rng.uniform(-config.coord_shift, config.coord_shift, size=obs.shape)
    return out


def contrastive_loss_from_projections(u_keys, u_queries, temperature):
    """Loss and gradients w.r.t. the projected key/query vectors.

    Each of the ``2n`` views is an anchor; its positive is the other view
    of the same state and its negatives are the ``2(n-1)`` views of other
    states.  The positive is not part of the denominator.
    """
    n = u_keys.shape[0]
    if n < 2:
        raise ValueError("contrastive loss needs a batch of at least 2")
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    u = np.concatenate([u_keys, u_queries])
    logits = (u @ u.T) / temperature
    rows = np.arange(2 * n)
    pos = (rows + n) % (2 * n)
    neg_mask = np.ones((2 * n, 2 * n), dtype=bool)
    neg_mask[rows, rows] = False
    neg_mask[rows, pos] = False
    masked = np.where(neg_mask, logits, -np.inf)
    top = masked.max(axis=1, keepdims=True)
    weights = np.exp(masked - top)
    denom = weights.sum(axis=1, keepdims=True)
    lse = np.log(denom[:, 0]) + top[:, 0]
    loss = float(np.mean(lse - logits[rows, pos]))

    dlogits = weights / denom
    dlogits[rows, pos] -= 1.0
    dlogits /= 2 * n
    du = (dlogits + dlogits.T) @ u / temperature
    return loss, du[:n], du[n:]


def contrastive_loss_and_grads(encoder: EncoderParams, projection: ProjectionParams, obs_batch,
                               temperature=0.1, rng=None, augment_config=AugmentConfig()):
    obs = as_points(obs_batch, "obs_batch")
    if obs.shape[0] < 2:
        raise ValueError("contrastive loss needs a batch of at least 2")
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    rng = np.random.default_rng(rng)
    keys = augment(obs, augment_config, rng)
    queries = augment(obs, augment_config, rng)
    n = obs.shape[0]
    z, enc_cache = _encoder_forward(encoder, np.concatenate([keys, queries]))
    u, proj_cache = _projection_forward(projection, z)
    loss, du_k, du_q = contrastive_loss_from_projections(u[:n], u[n:], temperature)
    proj_grads, dz = _projection_backward(projection, proj_cache, np.concatenate([du_k, du_q]))
    enc_grads = _encoder_backward(encoder, enc_cache, dz)
    return loss, {"encoder": enc_grads, "projection": proj_grads}


@dataclass
class OptimizerState:
    """Adam moments for the encoder and projection parameters."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def apply(self, nets: dict, grads: dict):
        self.step += 1
        bc1 = 1.0 - self.beta1 ** self.step
        bc2 = 1.0 - self.beta2 ** self.step
        for net_name, net in nets.items():
            for name, g in grads[net_name].items():
                key = (net_name, name)
                if key not in self.m:
                    self.m[key] = np.zeros_like(g)
                    self.v[key] = np.zeros_like(g)
                m = self.m[key]
                v = self.v[key]
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * g * g
                if self.lr:
                    net.params[name] -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def train_step(encoder, projection, optimizer: OptimizerState, obs_batch, temperature=0.1,
               rng=None, augment_config=AugmentConfig()) -> float:
    """One Adam step on the contrastive loss; parameters are updated in place.

    Returns the loss measured before the update.
    """
    loss, grads = contrastive_loss_and_grads(encoder, projection, obs_batch, temperature, rng, augment_config)
    optimizer.apply({"encoder": encoder, "projection": projection}, grads)
    return loss


def finite_difference_check(encoder, projection, obs_batch, epsilon=1e-5, temperature=0.1,
                            seed=0, augment_config=AugmentConfig()) -> float:
    """Largest relative gap between analytic and central-difference gradients.

    The augmentation noise is drawn from ``seed`` on every evaluation, so
    the loss is a deterministic function of the parameters.
    """
    n_params = sum(v.size for v in encoder.params.values()) + sum(v.size for v in projection.params.values())
    if n_params > 2000:
        raise ValueError(f"network too large for a finite-difference check ({n_params} parameters)")

    def loss_at():
        return contrastive_loss_and_grads(encoder, projection, obs_batch, temperature, seed, augment_config)[0]

    _, grads = contrastive_loss_and_grads(encoder, projection, obs_batch, temperature, seed, augment_config)
    worst = 0.0
    for net_name, net in (("encoder", encoder), ("projection", projection)):
        for name, arr in net.params.items():
            g = grads[net_name][name]
            flat = arr.reshape(-1)
            for i in range(flat.size):
                saved = flat[i]
                flat[i] = saved + epsilon
                up = loss_at()
                flat[i] = saved - epsilon
                down = loss_at()
                flat[i] = saved
                g_fd = (up - down) / (2 * epsilon)
                g_an = g.reshape(-1)[i]
                err = abs(g_fd - g_an) / max(abs(g_fd), abs(g_an), 1e-8)
                worst = max(worst, err)
    return worst


def save_checkpoint(path, encoder: EncoderParams, projection: ProjectionParams) -> None:
    desc = json.dumps({"encoder": encoder.descriptor(), "projection": projection.descriptor()},
                      sort_keys=True).encode("utf-8")
    chunks = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(desc)), desc]
    for net in (encoder, projection):
        for name in net.param_names():
            chunks.append(np.ascontiguousarray(net.params[name], dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != CHECKPOINT_MAGIC:
        raise ValueError("not an encoder checkpoint (bad magic)")
    version, length = struct.unpack_from("<II", blob, 8)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    desc = json.loads(blob[16:16 + length].decode("utf-8"))
    e, p = desc["encoder"], desc["projection"]
    encoder = init_encoder(e["in_dim"], e["hidden"], e["latent_dim"], rng=0)
    projection = init_projection(p["in_dim"], p["hidden"], p["out_dim"], rng=0)
    values = np.frombuffer(blob, dtype="<f8", offset=16 + length)
    pos = 0
    for net in (encoder, projection):
        for name in net.param_names():
            shape = net.params[name].shape
            size = int(np.prod(shape))
            if pos + size > values.size:
                raise ValueError("checkpoint truncated")
            net.params[name] = values[pos:pos + size].reshape(shape).astype(np.float64)
            pos += size
    if pos != values.size:
        raise ValueError("checkpoint has trailing data")
    return encoder, projection
