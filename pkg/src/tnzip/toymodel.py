"""Desk-scale decoder block and the compress-then-heal experiment.

One block: token/position embedding, single-head self-attention, residual
MLP, output head.  Every weight matrix sits behind a small linear-op wrapper
so a plain array and a lattice-backed operator are interchangeable; by
default only the two MLP matrices get tensorized, attention optionally.
Everything is numpy with hand-written gradients, deterministic under the
configured seed.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .decompose import decompose_weight
from .errors import ConfigInvalid, DivergenceDetected, ShapeMismatch
from .gridspec import make_grid_spec
from .lattice import PepsLattice, SiteTensor, lattice_matrix, parameter_count
from .layer import site_gradients

TASKS = ("copy", "reverse", "modular-add")

OP_NAMES = ("wq", "wk", "wv", "wo", "mlp1", "mlp2")
MLP_OPS = ("mlp1", "mlp2")
ATTENTION_OPS = ("wq", "wk", "wv", "wo")


@dataclass(frozen=True)
class ToyConfig:
    vocab: int = 8
    width: int = 32
    seq_len: int = 8
    hidden: int = 64
    task: str = "copy"
    seed: int = 0
    learning_rate: float = 0.01
    steps: int = 300
    batch_size: int = 32

    def __post_init__(self):
        for name in ("vocab", "width", "seq_len", "hidden", "batch_size"):
            if getattr(self, name) < 1:
                raise ConfigInvalid(f"{name} must be positive, got {getattr(self, name)}")
        if self.steps < 0:
            raise ConfigInvalid(f"steps must be >= 0, got {self.steps}")
        if self.learning_rate <= 0:
            raise ConfigInvalid(f"learning_rate must be positive, got {self.learning_rate}")
        if self.task not in TASKS:
            raise ConfigInvalid(f"unknown task {self.task!r}; choose from {TASKS}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ToyConfig":
        return cls(**d)


@dataclass
class TrainReport:
    loss_curve: list = field(default_factory=list)
    accuracy: float = 0.0
    eval_loss: float = 0.0
    wall_time_s: float = 0.0
    parameter_count: int = 0
    phase: str = "dense"

    def to_dict(self) -> dict:
        return asdict(self)


def task_targets(task: str, tokens: np.ndarray, vocab: int) -> np.ndarray:
    if task == "copy":
        return tokens.copy()
    if task == "reverse":
        return tokens[:, ::-1].copy()
    if task == "modular-add":
        prev = np.roll(tokens, 1, axis=1)
        prev[:, 0] = 0
        return (tokens + prev) % vocab
    raise ConfigInvalid(f"unknown task {task!r}")


class DenseLinear:
    """Plain weight matrix acting as rows -> rows @ W.T."""

    def __init__(self, name: str, w: np.ndarray):
        self.name = name
        self.w = np.array(w, dtype=np.float64)

    def matrix(self) -> np.ndarray:
        return self.w

    def n_params(self) -> int:
        return self.w.size

    def parameters(self) -> dict:
        return {self.name: self.w}

    def set_parameters(self, values: dict) -> None:
        self.w = values[self.name]

    def weight_grads(self, pairing: np.ndarray) -> dict:
        return {self.name: pairing}


class PepsLinear:
    """Lattice-backed linear operator; parameters are the site tensors."""

    def __init__(self, name: str, lattice: PepsLattice, chi_forward: int):
        self.name = name
        self.lattice = lattice
        self.chi_forward = int(chi_forward)
        self._matrix: np.ndarray | None = None

    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            spec = self.lattice.spec
            self._matrix = lattice_matrix(self.lattice)[: spec.orig_out, : spec.orig_in]
        return self._matrix

    def n_params(self) -> int:
        return parameter_count(self.lattice)

    def site_name(self, r: int, c: int) -> str:
        return f"{self.name}.site_{r}_{c}"

    def parameters(self) -> dict:
        return {
            self.site_name(r, c): self.lattice.site(r, c).data
            for r in range(self.lattice.rows)
            for c in range(self.lattice.cols)
        }

    def set_parameters(self, values: dict) -> None:
        sites = tuple(
            tuple(
                SiteTensor(data=values[self.site_name(r, c)])
                for c in range(self.lattice.cols)
            )
            for r in range(self.lattice.rows)
        )
        self.lattice = PepsLattice(
            rows=self.lattice.rows, cols=self.lattice.cols, sites=sites, spec=self.lattice.spec
        )
        self._matrix = None

    def weight_grads(self, pairing: np.ndarray) -> dict:
        """Per-site gradients from the batch-summed outer product dY^T X."""
        grads = site_gradients(self.lattice, pairing)
        return {
            self.site_name(r, c): grads[r][c]
            for r in range(self.lattice.rows)
            for c in range(self.lattice.cols)
        }


class ToyModel:
    """One decoder block: embed -> self-attention -> residual MLP -> head."""

    def __init__(self, cfg: ToyConfig):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        d, v, h, L = cfg.width, cfg.vocab, cfg.hidden, cfg.seq_len
        scale = 0.1
        self.emb = rng.normal(0.0, scale, (v, d))
        self.pos = rng.normal(0.0, scale, (L, d))
        self.ops = {
            "wq": DenseLinear("wq", rng.normal(0.0, scale, (d, d))),
            "wk": DenseLinear("wk", rng.normal(0.0, scale, (d, d))),
            "wv": DenseLinear("wv", rng.normal(0.0, scale, (d, d))),
            "wo": DenseLinear("wo", rng.normal(0.0, scale, (d, d))),
            "mlp1": DenseLinear("mlp1", rng.normal(0.0, scale, (h, d))),
            "mlp2": DenseLinear("mlp2", rng.normal(0.0, scale, (d, h))),
        }
        # zero head keeps the untrained argmax unbiased (chance accuracy)
        self.head = np.zeros((v, d))
        self.rng = np.random.default_rng(cfg.seed + 1)

    def parameters(self) -> dict:
        params = {"emb": self.emb, "pos": self.pos, "head": self.head}
        for op in self.ops.values():
            params.update(op.parameters())
        return params

    def set_parameters(self, values: dict) -> None:
        self.emb = values["emb"]
        self.pos = values["pos"]
        self.head = values["head"]
        for op in self.ops.values():
            op.set_parameters(values)

    def parameter_count(self) -> int:
        fixed = self.emb.size + self.pos.size + self.head.size
        return fixed + sum(op.n_params() for op in self.ops.values())

    def forward_logits(self, tokens: np.ndarray, want_cache: bool = False):
        cfg = self.cfg
        tokens = np.asarray(tokens)
        if tokens.ndim != 2 or tokens.shape[1] != cfg.seq_len:
            raise ShapeMismatch(f"tokens must be (batch, {cfg.seq_len}), got {tokens.shape}")
        B, L = tokens.shape
        d = cfg.width
        wq, wk, wv, wo = (self.ops[n].matrix() for n in ATTENTION_OPS)
        w1, w2 = self.ops["mlp1"].matrix(), self.ops["mlp2"].matrix()

        H = self.emb[tokens] + self.pos[None, :, :]
        Q = H @ wq.T
        K = H @ wk.T
        V = H @ wv.T
        S = Q @ np.transpose(K, (0, 2, 1)) / np.sqrt(d)
        S = S - S.max(axis=-1, keepdims=True)
        A = np.exp(S)
        A = A / A.sum(axis=-1, keepdims=True)
        ctx = A @ V
        H2 = H + ctx @ wo.T
        Z = H2.reshape(B * L, d) @ w1.T
        Zr = np.maximum(Z, 0.0)
        M = Zr @ w2.T
        H3 = H2 + M.reshape(B, L, d)
        logits = H3 @ self.head.T
        if not want_cache:
            return logits
        cache = dict(tokens=tokens, H=H, Q=Q, K=K, V=V, A=A, ctx=ctx, H2=H2, Z=Z, Zr=Zr, H3=H3)
        return logits, cache

    def loss_and_grads(self, tokens: np.ndarray, targets: np.ndarray):
        cfg = self.cfg
        logits, cache = self.forward_logits(tokens, want_cache=True)
        B, L, _ = logits.shape
        shifted = logits - logits.max(axis=-1, keepdims=True)
        expl = np.exp(shifted)
        probs = expl / expl.sum(axis=-1, keepdims=True)
        idx = (np.arange(B)[:, None], np.arange(L)[None, :], targets)
        loss = float(-np.mean(np.log(probs[idx] + 1e-300)))

        dlogits = probs.copy()
        dlogits[idx] -= 1.0
        dlogits /= B * L

        H, Q, K, V, A, ctx, H2 = (cache[k] for k in ("H", "Q", "K", "V", "A", "ctx", "H2"))
        Z, Zr, H3 = cache["Z"], cache["Zr"], cache["H3"]
        d = cfg.width
        wq, wk, wv, wo = (self.ops[n].matrix() for n in ATTENTION_OPS)
        w1, w2 = self.ops["mlp1"].matrix(), self.ops["mlp2"].matrix()

        grads: dict = {"head": np.einsum("blv,bld->vd", dlogits, H3)}
        dH3 = dlogits @ self.head

        dM = dH3.reshape(B * L, d)
        g2 = dM.T @ Zr
        dZr = dM @ w2
        dZ = dZr * (Z > 0)
        g1 = dZ.T @ H2.reshape(B * L, d)
        dH2 = dH3 + (dZ @ w1).reshape(B, L, d)

        go = np.einsum("bld,blk->dk", dH2, ctx)
        dctx = dH2 @ wo
        dA = dctx @ np.transpose(V, (0, 2, 1))
        dV = np.transpose(A, (0, 2, 1)) @ dctx
        dS = A * (dA - np.sum(dA * A, axis=-1, keepdims=True))
        dS /= np.sqrt(d)
        dQ = dS @ K
        dK = np.transpose(dS, (0, 2, 1)) @ Q
        gq = np.einsum("bld,ble->de", dQ, H)
        gk = np.einsum("bld,ble->de", dK, H)
        gv = np.einsum("bld,ble->de", dV, H)
        dH = dH2 + dQ @ wq + dK @ wk + dV @ wv

        for name, g in (("wq", gq), ("wk", gk), ("wv", gv), ("wo", go), ("mlp1", g1), ("mlp2", g2)):
            grads.update(self.ops[name].weight_grads(g))

        grads["pos"] = dH.sum(axis=0)
        demb = np.zeros_like(self.emb)
        np.add.at(demb, cache["tokens"].reshape(-1), dH.reshape(-1, d))
        grads["emb"] = demb
        return loss, grads


def build_toy_model(cfg: ToyConfig) -> ToyModel:
    """Deterministically initialized decoder block (dense MLP phase)."""
    return ToyModel(cfg)


def _eval_batch(cfg: ToyConfig):
    rng = np.random.default_rng(cfg.seed + 101)
    tokens = rng.integers(0, cfg.vocab, size=(64, cfg.seq_len))
    return tokens, task_targets(cfg.task, tokens, cfg.vocab)


def evaluate(model: ToyModel, phase: str) -> TrainReport:
    """Accuracy and loss on the fixed seeded evaluation batch."""
    cfg = model.cfg
    tokens, targets = _eval_batch(cfg)
    logits = model.forward_logits(tokens)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    expl = np.exp(shifted)
    probs = expl / expl.sum(axis=-1, keepdims=True)
    idx = (np.arange(tokens.shape[0])[:, None], np.arange(cfg.seq_len)[None, :], targets)
    loss = float(-np.mean(np.log(probs[idx] + 1e-300)))
    acc = float(np.mean(np.argmax(logits, axis=-1) == targets))
    return TrainReport(
        loss_curve=[],
        accuracy=acc,
        eval_loss=loss,
        wall_time_s=0.0,
        parameter_count=model.parameter_count(),
        phase=phase,
    )


class _Adam:
    def __init__(self, lr: float):
        self.lr = lr
        self.beta1, self.beta2, self.eps = 0.9, 0.999, 1e-8
        self.m: dict = {}
        self.v: dict = {}
        self.t = 0

    def step(self, params: dict, grads: dict) -> dict:
        self.t += 1
        out = {}
        for name, p in params.items():
            g = grads[name]
            m = self.m.get(name, np.zeros_like(p))
            v = self.v.get(name, np.zeros_like(p))
            m = self.beta1 * m + (1 - self.beta1) * g
            v = self.beta2 * v + (1 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            mhat = m / (1 - self.beta1**self.t)
            vhat = v / (1 - self.beta2**self.t)
            out[name] = p - self.lr * mhat / (np.sqrt(vhat) + self.eps)
        return out


def train(model: ToyModel, task: str, steps: int, phase: str = "dense") -> TrainReport:
    """Adam training on a synthetic sequence task; deterministic per seed.

    Raises DivergenceDetected (with the partial report attached) if the loss
    goes non-finite.
    """
    if task not in TASKS:
        raise ConfigInvalid(f"unknown task {task!r}; choose from {TASKS}")
    cfg = model.cfg
    start = time.perf_counter()
    opt = _Adam(cfg.learning_rate)
    curve: list[float] = []
    for _ in range(int(steps)):
        tokens = model.rng.integers(0, cfg.vocab, size=(cfg.batch_size, cfg.seq_len))
        targets = task_targets(task, tokens, cfg.vocab)
        loss, grads = model.loss_and_grads(tokens, targets)
        curve.append(loss)
        if not np.isfinite(loss):
            partial = evaluate(model, phase)
            partial.loss_curve = curve
            partial.wall_time_s = time.perf_counter() - start
            raise DivergenceDetected(f"loss became non-finite at step {len(curve)}", partial)
        params = model.parameters()
        model.set_parameters(opt.step(params, grads))
    report = evaluate(model, phase)
    report.loss_curve = curve
    report.wall_time_s = time.perf_counter() - start
    return report


def choose_chi_for_ratio(
    model: ToyModel, target_ratio: float = 0.30, grid: tuple[int, int] = (2, 2), max_chi: int = 16
) -> int:
    """Bond dimension whose tensorized-MLP parameter ratio lands nearest the target."""
    dense = sum(model.ops[n].matrix().size for n in MLP_OPS)
    best_chi, best_gap = 1, float("inf")
    for chi in range(1, max_chi + 1):
        total = 0
        for name in MLP_OPS:
            w = model.ops[name].matrix()
            spec = make_grid_spec(w.shape[0], w.shape[1], grid[0], grid[1])
            lat, _ = decompose_weight(w, spec, chi)
            total += parameter_count(lat)
        gap = abs(total / dense - target_ratio)
        if gap < best_gap:
            best_chi, best_gap = chi, gap
    return best_chi


def compress_and_heal(
    model: ToyModel,
    chi: int | None,
    heal_steps: int,
    grid: tuple[int, int] = (2, 2),
    tensorize_attention: bool = False,
) -> tuple[ToyModel, tuple[TrainReport, TrainReport]]:
    """Swap the MLP matrices for lattice operators, then fine-tune.

    ``chi=None`` decomposes without truncation, which leaves the model's map
    unchanged up to roundoff.  Healing trains the compressed parameter set on
    the model's own task; the parameter count cannot grow.  With
    ``tensorize_attention`` the four attention matrices get the same
    treatment.
    """
    targets = list(MLP_OPS) + (list(ATTENTION_OPS) if tensorize_attention else [])
    for name in targets:
        w = model.ops[name].matrix()
        spec = make_grid_spec(w.shape[0], w.shape[1], grid[0], grid[1])
        chi_eff = int(chi) if chi is not None else spec.pad_out * spec.pad_in
        lat, _ = decompose_weight(w, spec, chi_eff)
        model.ops[name] = PepsLinear(name, lat, chi_eff)
    pre = evaluate(model, "compressed")
    if heal_steps > 0:
        train(model, model.cfg.task, heal_steps, phase="healed")
    post = evaluate(model, "healed")
    return model, (pre, post)
