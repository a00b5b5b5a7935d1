"""Gradient fitting of primitive unions to classified point samples.

The objective has two parts.  The sign loss pushes tanh of the union value
toward 0 on surface samples, -1 on interior samples and +1 on exterior
samples, each class averaged separately and weighted.  The normal loss is the
mean squared difference between the union surface normal and the sampled mesh
normal over surface points.  Both are differentiated analytically down to the
raw parameters; optimization is plain Adam on a (M, 59) parameter matrix.

Loss and gradient reductions always run over fixed index ranges of the batch,
whatever the worker count, so a fit is bit-for-bit reproducible with any
--threads setting.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .mesh import SampleSet
from .primitive import DEFAULT_ALPHA, RAW_CLAMP, RawPrimitiveParams, TRIL_COLS, TRIL_ROWS
from .scene import DEGENERATE_GRAD_NORM, Scene, prune

DEFAULT_LAMBDAS = (2.0, 1.0, 10.0)

# Reduction granularity for loss/gradient accumulation.  Chunk boundaries
# depend only on the batch size, never on the worker count.
CHUNK = 1024

MAX_PRIMITIVES = 100


class FitDivergedError(RuntimeError):
    """Loss stayed far above its starting value for too many steps."""


class NonFiniteGradientError(RuntimeError):
    """A loss gradient came back NaN or infinite."""


@dataclass
class FitConfig:
    primitives: int = 100
    iters: int = 5000
    lr: float = 5e-3
    lambda_on: float = 2.0
    lambda_in: float = 1.0
    lambda_out: float = 10.0
    lambda_n: float = 1.0
    volume_batch_fraction: float = 0.01
    surface_batch_fraction: float = 0.20
    alpha: float = DEFAULT_ALPHA
    seed: int = 0
    prune_on_finish: bool = True
    threads: int = 1
    init_scale: float = 0.05
    log_every: int = 100
    divergence_factor: float = 10.0
    divergence_patience: int = 100

    def validate(self) -> None:
        if not 1 <= self.primitives <= MAX_PRIMITIVES:
            raise ValueError(f"primitives must be in [1, {MAX_PRIMITIVES}], got {self.primitives}")
        if self.iters < 1:
            raise ValueError("iters must be at least 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        for name in ("lambda_on", "lambda_in", "lambda_out", "lambda_n"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("volume_batch_fraction", "surface_batch_fraction"):
            frac = getattr(self, name)
            if not 0.0 < frac <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {frac}")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")

    def lambdas(self) -> np.ndarray:
        return np.array([self.lambda_on, self.lambda_in, self.lambda_out, self.lambda_n])


@dataclass
class LossBreakdown:
    sign: float
    normal: float
    total: float
    on_used: int
    on_degenerate: int


@dataclass
class FitResult:
    scene: Scene
    history: np.ndarray  # (iters, 4) columns: step, sign loss, normal loss, total
    steps: int
    config: FitConfig = field(repr=False)

    @property
    def final_total(self) -> float:
        return float(self.history[-1, 3])


def _stacked_samples(samples: SampleSet):
    n_on, n_in, n_out = samples.counts
    pts = np.concatenate([samples.on_points, samples.in_points, samples.out_points])
    kinds = np.concatenate([
        np.zeros(n_on, dtype=np.uint8),
        np.ones(n_in, dtype=np.uint8),
        np.full(n_out, 2, dtype=np.uint8),
    ])
    normals = np.zeros((len(pts), 3))
    normals[:n_on] = samples.on_normals
    return np.ascontiguousarray(pts), kinds, np.ascontiguousarray(normals)


def evaluate_loss(scene: Scene, samples: SampleSet,
                  lambdas=DEFAULT_LAMBDAS, lambda_n: float = 1.0) -> LossBreakdown:
    """Full-set losses of a scene against a sample set (no batching)."""
    pts, kinds, normals = _stacked_samples(samples)
    lams = np.array([*lambdas, lambda_n], dtype=np.float64)
    # B is unused without gradients; A stands in to keep the signature uniform
    s, n, used, degen, _ = _kernels.loss_grad(
        scene.A_stack, scene.A_stack, scene.center_stack, pts, kinds, normals, lams, False
    )
    return LossBreakdown(sign=float(s), normal=float(n), total=float(s + lambda_n * n),
                         on_used=int(used), on_degenerate=int(degen))


def sign_loss(scene: Scene, samples: SampleSet, lambdas=DEFAULT_LAMBDAS) -> float:
    return evaluate_loss(scene, samples, lambdas=lambdas, lambda_n=0.0).sign


def normal_loss(scene: Scene, samples: SampleSet) -> float:
    """Mean squared normal error over non-degenerate surface samples.

    Errors out when more than half the surface batch sits at a vanishing
    union gradient; a loss over so few survivors would be meaningless.
    """
    br = evaluate_loss(scene, samples)
    n_on = br.on_used + br.on_degenerate
    if n_on and br.on_degenerate * 2 > n_on:
        raise ValueError(
            f"{br.on_degenerate} of {n_on} surface points have a degenerate gradient"
        )
    return br.normal


def _assemble_stack(params: np.ndarray, alpha: float):
    """Vectorized assembly of raw rows: returns (A, B, centers, R, active mask).

    Only r_raw and the center pre-activations are clamped (matching single
    primitive assembly); the active mask zeroes their gradient when pinned.
    """
    b = params[:, :55]
    r_raw = np.clip(params[:, 55], -RAW_CLAMP, RAW_CLAMP)
    c_raw = np.clip(params[:, 56:59], -RAW_CLAMP, RAW_CLAMP)
    m = len(params)
    B = np.zeros((m, 10, 10))
    B[:, TRIL_ROWS, TRIL_COLS] = b
    B[:, TRIL_COLS, TRIL_ROWS] = b
    R = 1.0 / (1.0 + np.exp(-r_raw))
    centers = np.tanh(c_raw)
    A = np.einsum("mij,mjk->mik", B, B)
    A[:, np.arange(10), np.arange(10)] += alpha
    A[:, [4, 5, 6], [4, 5, 6]] += 1.0
    A[:, 0, 0] -= R
    active = np.ones_like(params, dtype=bool)
    active[:, 55:59] = np.abs(params[:, 55:59]) < RAW_CLAMP
    return np.ascontiguousarray(A), np.ascontiguousarray(B), np.ascontiguousarray(centers), R, active


def _chunk_ranges(n: int, size: int = CHUNK) -> list[tuple[int, int]]:
    return [(s, min(s + size, n)) for s in range(0, n, size)]


def _chunked_loss_grad(A, B, centers, pts, kinds, normals, lams, want_grad, pool=None):
    """Loss and gradient over the batch, reduced chunk by chunk in index order.

    Each chunk gets its class weights rescaled by local count / batch count so
    the per-point weight equals the whole-batch weight; the normal weight is
    rescaled by the chunk's share of non-degenerate surface points, counted in
    a first pass.  Summing chunk results in index order then reproduces the
    batch loss regardless of how many workers computed the chunks.
    """
    n = len(pts)
    ranges = _chunk_ranges(n)
    counts = np.bincount(kinds, minlength=3)
    lam_on, lam_in, lam_out, lam_n = (float(v) for v in lams)
    run = pool.map if pool is not None else map

    def count_used(rg):
        s, e = rg
        on = kinds[s:e] == 0
        if not on.any():
            return 0
        _, _, g = _kernels.union_eval_grad(A, centers, np.ascontiguousarray(pts[s:e][on]))
        return int(np.count_nonzero(np.linalg.norm(g, axis=1) > DEGENERATE_GRAD_NORM))

    used_per = list(run(count_used, ranges))
    n_used = sum(used_per)

    lam_by_kind = (lam_on, lam_in, lam_out)

    def eval_chunk(args):
        j, (s, e) = args
        ck = kinds[s:e]
        cc = np.bincount(ck, minlength=3)
        lj = [lam_by_kind[c] * cc[c] / counts[c] if counts[c] else 0.0 for c in range(3)]
        lj.append(lam_n * used_per[j] / n_used if n_used else 0.0)
        return _kernels.loss_grad(A, B, centers, pts[s:e], ck, normals[s:e],
                                  np.array(lj), want_grad)

    results = list(run(eval_chunk, list(enumerate(ranges))))

    sign = 0.0
    normal = 0.0
    degen = 0
    grad = np.zeros((len(A), 59)) if want_grad else None
    for j, (s_j, nl_j, _, d_j, g_j) in enumerate(results):
        sign += s_j
        if n_used:
            normal += nl_j * (used_per[j] / n_used)
        degen += d_j
        if want_grad:
            grad += g_j
    return float(sign), float(normal), n_used, degen, grad


def _raw_matrix(params) -> np.ndarray:
    if isinstance(params, np.ndarray):
        mat = np.asarray(params, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[1] != 59:
            raise ValueError(f"raw parameter matrix must be (M, 59), got {mat.shape}")
        return mat
    return np.stack([p.as_vector() for p in params])


def total_loss_and_grad(params, pts, kinds, normals, config: FitConfig,
                        pool=None) -> tuple[float, np.ndarray]:
    """Total batch loss and its analytic gradient w.r.t. the raw parameters.

    params is an (M, 59) matrix (or a list of RawPrimitiveParams).  The
    gradient includes the sigmoid/tanh chains of R and the center, and is
    zero for pre-activations pinned at the clamp.
    """
    mat = _raw_matrix(params)
    A, B, centers, R, active = _assemble_stack(mat, config.alpha)
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    kinds = np.ascontiguousarray(kinds, dtype=np.uint8)
    normals = np.ascontiguousarray(normals, dtype=np.float64)
    s_loss, n_loss, _, _, grad = _chunked_loss_grad(
        A, B, centers, pts, kinds, normals, config.lambdas(), True, pool
    )
    total = s_loss + config.lambda_n * n_loss

    # chain the raw activations: the kernel returns d/d(b, R, center)
    grad[:, 55] *= R * (1.0 - R)
    grad[:, 56:59] *= 1.0 - centers * centers
    grad *= active

    if not np.all(np.isfinite(grad)):
        prim = int(np.flatnonzero(~np.isfinite(grad).all(axis=1))[0])
        vals, _ = _kernels.union_eval(A, centers, pts)
        bad_pts = np.flatnonzero(~np.isfinite(vals))
        where = f"point {int(bad_pts[0])}" if bad_pts.size else "no single point"
        raise NonFiniteGradientError(
            f"non-finite gradient for primitive {prim} ({where} in the batch)"
        )
    return float(total), grad


def _fps_centers(pts: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Farthest point sampling, seeded at the point farthest from the centroid."""
    if len(pts) == 0:
        return rng.uniform(-0.5, 0.5, size=(k, 3))
    centroid = pts.mean(axis=0)
    first = int(np.argmax(np.einsum("nk,nk->n", pts - centroid, pts - centroid)))
    chosen = [first]
    d = np.einsum("nk,nk->n", pts - pts[first], pts - pts[first])
    while len(chosen) < min(k, len(pts)):
        nxt = int(np.argmax(d))
        chosen.append(nxt)
        delta = pts - pts[nxt]
        d = np.minimum(d, np.einsum("nk,nk->n", delta, delta))
    out = pts[chosen]
    if len(out) < k:  # more primitives than surface points: pad randomly
        extra = rng.uniform(-0.5, 0.5, size=(k - len(out), 3))
        out = np.concatenate([out, extra])
    return out


def init_params(samples: SampleSet, config: FitConfig, rng: np.random.Generator) -> np.ndarray:
    """(M, 59) raw parameter matrix: small random B, R at 1/2, centers spread by FPS."""
    m = config.primitives
    params = np.zeros((m, 59))
    params[:, :55] = rng.normal(0.0, config.init_scale, size=(m, 55))
    centers = _fps_centers(samples.on_points, m, rng)
    params[:, 56:59] = np.arctanh(np.clip(centers, -0.999999, 0.999999))
    return params


def fit(samples: SampleSet, config: FitConfig | None = None, callback=None) -> FitResult:
    """Fit a union of quartic primitives to a sample set.

    Deterministic for a fixed sample set, config and kernel backend; the
    threads field changes wall time only, never the result.  Raises
    FitDivergedError when the batch loss exceeds divergence_factor times the
    first-step loss for divergence_patience consecutive steps.
    """
    config = config or FitConfig()
    config.validate()
    n_on, n_in, n_out = samples.counts
    if n_on == 0 or n_in == 0 or n_out == 0:
        raise ValueError(
            f"sample set needs every class populated, got on/in/out = {samples.counts}"
        )

    rng = np.random.default_rng(config.seed)
    params = init_params(samples, config, rng)

    vol_pts = np.concatenate([samples.in_points, samples.out_points])
    vol_kinds = np.concatenate([
        np.ones(n_in, dtype=np.uint8), np.full(n_out, 2, dtype=np.uint8)
    ])
    n_vol = len(vol_pts)
    surf_bs = max(1, int(round(config.surface_batch_fraction * n_on)))
    vol_bs = max(1, int(round(config.volume_batch_fraction * n_vol)))

    adam_m = np.zeros_like(params)
    adam_v = np.zeros_like(params)
    beta1, beta2, eps = 0.9, 0.999, 1e-8

    history = np.empty((config.iters, 4))
    baseline = None
    bad_streak = 0

    pool = ThreadPoolExecutor(max_workers=config.threads) if config.threads > 1 else None
    try:
        for step in range(1, config.iters + 1):
            sidx = rng.integers(0, n_on, size=surf_bs)
            vidx = rng.integers(0, n_vol, size=vol_bs)
            pts = np.ascontiguousarray(
                np.concatenate([samples.on_points[sidx], vol_pts[vidx]])
            )
            kinds = np.concatenate([np.zeros(surf_bs, dtype=np.uint8), vol_kinds[vidx]])
            normals = np.ascontiguousarray(
                np.concatenate([samples.on_normals[sidx], np.zeros((vol_bs, 3))])
            )

            A, B, centers, R, active = _assemble_stack(params, config.alpha)
            s_loss, n_loss, _, _, grad = _chunked_loss_grad(
                A, B, centers, pts, kinds, normals, config.lambdas(), True, pool
            )
            total = s_loss + config.lambda_n * n_loss
            grad[:, 55] *= R * (1.0 - R)
            grad[:, 56:59] *= 1.0 - centers * centers
            grad *= active
            if not np.all(np.isfinite(grad)):
                prim = int(np.flatnonzero(~np.isfinite(grad).all(axis=1))[0])
                raise NonFiniteGradientError(
                    f"non-finite gradient for primitive {prim} at step {step}"
                )

            adam_m = beta1 * adam_m + (1.0 - beta1) * grad
            adam_v = beta2 * adam_v + (1.0 - beta2) * grad * grad
            mhat = adam_m / (1.0 - beta1**step)
            vhat = adam_v / (1.0 - beta2**step)
            params = params - config.lr * mhat / (np.sqrt(vhat) + eps)

            history[step - 1] = (step, s_loss, n_loss, total)

            if baseline is None:
                baseline = max(total, 1e-12)
            if total > config.divergence_factor * baseline:
                bad_streak += 1
                if bad_streak >= config.divergence_patience:
                    raise FitDivergedError(
                        f"loss {total:.4g} stayed above {config.divergence_factor:g} x "
                        f"initial {baseline:.4g} for {bad_streak} steps (step {step})"
                    )
            else:
                bad_streak = 0

            if callback is not None and (step == 1 or step % config.log_every == 0
                                         or step == config.iters):
                callback(step, total)
    finally:
        if pool is not None:
            pool.shutdown(wait=False)

    raws = [
        RawPrimitiveParams(b=params[i, :55].copy(), r_raw=float(params[i, 55]),
                           c_raw=params[i, 56:59].copy())
        for i in range(config.primitives)
    ]
    meta = {
        "generator": "fit",
        "seed": str(config.seed),
        "iters": str(config.iters),
        "primitives": str(config.primitives),
        "kernel_backend": _kernels.BACKEND,
    }
    scene = Scene.from_raw(raws, alpha=config.alpha, meta=meta)
    if config.prune_on_finish:
        scene = prune(scene)
    return FitResult(scene=scene, history=history, steps=config.iters, config=config)


def write_history_csv(result: FitResult, path: str) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write("iter,sign_loss,normal_loss,total\n")
        for step, s, n, tot in result.history:
            fh.write(f"{int(step)},{float(s)!r},{float(n)!r},{float(tot)!r}\n")
