"""Top-level drivers: multi-resolution matching, feature-field inversion,
geodesic interpolation, pairwise discrepancies, and iterative means.

The matching driver minimizes the symmetric energy over the stacked
vertices of a free mesh pair, coarse to fine: optimize, subdivide both
meshes 1-to-4, repeat. Geodesics linearly interpolate the first-order
feature fields of the matched pair and invert the feature map at each time
sample. The mean driver follows the streaming centroid recursion: match the
running mean to each (shuffled) input, blend feature fields with weight
1/((i-1)n + j), and invert.
"""

import dataclasses
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from . import energy as energy_mod
from . import features, lbfgs, varifold
from .energy import MatchConfig
from .errors import ConfigError, TextureError
from .features import SrnfField
from .lbfgs import OptimConfig, OptimReport
from .mesh import TriangleMesh, decimate, subdivide, total_area, \
    transfer_texture

logger = logging.getLogger(__name__)

INIT_MODES = ("decimate_source", "decimate_target", "template")


@dataclass
class Level:
    """One resolution level: kernel scale, penalty weight, optimizer
    settings."""
    sigma: float
    lam: float
    optim: OptimConfig = field(default_factory=OptimConfig)


@dataclass
class MultiResSchedule:
    """Coarse-to-fine schedule.

    init_mode selects the initial coarse pair: a decimated copy of the
    source or target data mesh, or an explicit template mesh. coarse_faces
    is the decimation target; when None it is chosen so that the final
    level roughly recovers the data resolution.
    """
    levels: List[Level]
    init_mode: str = "decimate_source"
    template: Optional[TriangleMesh] = None
    subdivide_between_levels: bool = True
    coarse_faces: Optional[int] = None

    def __post_init__(self):
        if not self.levels:
            raise ConfigError("schedule needs at least one level")
        if self.init_mode not in INIT_MODES:
            raise ConfigError(
                f"init_mode must be one of {INIT_MODES}, "
                f"got '{self.init_mode}'")
        if self.init_mode == "template" and self.template is None:
            raise ConfigError("init_mode 'template' requires a template mesh")
        sigmas = [lv.sigma for lv in self.levels]
        lams = [lv.lam for lv in self.levels]
        if any(b > a for a, b in zip(sigmas, sigmas[1:])):
            logger.warning("schedule sigma values are not non-increasing")
        if any(b < a for a, b in zip(lams, lams[1:])):
            logger.warning("schedule lambda values are not non-decreasing")


@dataclass
class LevelReport:
    """Outcome of one level: configuration, energy term breakdown before
    and after optimization, and the optimizer report.

    ``initial_terms`` and ``final_terms`` are evaluated with the level's own
    kernel scale and penalty weight. ``initial_terms_common`` and
    ``final_terms_common`` re-evaluate the same configurations under the
    last level's scale and weight, one yardstick across levels: refinement
    plus warm-started minimization makes the common final energies decrease
    level over level."""
    sigma: float
    lam: float
    faces: int
    initial_terms: dict
    final_terms: dict
    optim: OptimReport
    initial_terms_common: dict = None
    final_terms_common: dict = None


@dataclass
class GeodesicPath:
    """Mesh path with shared combinatorics on strictly increasing times."""
    samples: List[TriangleMesh]
    times: np.ndarray


def default_schedule(q0, q1, levels=3, optim=None, init_mode="decimate_source",
                     template=None, coarse_faces=None):
    """Data-driven schedule: kernel scales D/5, D/10, D/20, ... with D the
    joint bounding-box diagonal, and penalty weights 10, 100, 1000, ...
    normalized by the ratio of the mean total area to the mean squared
    varifold norm at scale D/10."""
    if optim is None:
        optim = OptimConfig()
    both = np.vstack([q0.vertices, q1.vertices])
    diag = float(np.linalg.norm(both.max(axis=0) - both.min(axis=0)))
    if diag <= 0.0:
        raise ConfigError("degenerate input meshes (zero bounding box)")
    kernel_mid = varifold.KernelConfig(sigma=diag / 10.0)
    a0, a1 = varifold.atoms(q0), varifold.atoms(q1)
    norm_mid = 0.5 * (varifold.inner(a0, a0, kernel_mid)
                      + varifold.inner(a1, a1, kernel_mid))
    area = 0.5 * (total_area(q0) + total_area(q1))
    lam_base = area / max(norm_mid, 1e-300)
    level_list = [
        Level(sigma=diag / (5.0 * 2.0 ** i),
              lam=lam_base * 10.0 ** (i + 1),
              optim=optim)
        for i in range(levels)
    ]
    return MultiResSchedule(level_list, init_mode=init_mode,
                            template=template, coarse_faces=coarse_faces)


def match(q0t, q1t, q0, q1, cfg, opt):
    """Minimize the symmetric energy over the stacked vertices of the free
    pair. Connectivity is unchanged; returns the optimized pair and the
    optimizer report."""
    features._require_same_combinatorics(q0t, q1t)
    n0 = q0t.n_vertices * 3

    def objective(x):
        m0 = q0t.with_vertices(x[:n0].reshape(-1, 3))
        m1 = q1t.with_vertices(x[n0:].reshape(-1, 3))
        val, g0, g1 = energy_mod.symmetric_energy_grad(m0, m1, q0, q1, cfg)
        return val, np.concatenate([g0.ravel(), g1.ravel()])

    x0 = np.concatenate([q0t.vertices.ravel(), q1t.vertices.ravel()])
    x, report = lbfgs.minimize(objective, x0, opt)
    out0 = q0t.with_vertices(x[:n0].reshape(-1, 3))
    out1 = q1t.with_vertices(x[n0:].reshape(-1, 3))
    return out0, out1, report


def _initial_pair(q0, q1, schedule, use_texture):
    if schedule.init_mode == "template":
        init = schedule.template
        anchor = q0
        anchor_side = 0
    else:
        anchor_side = 0 if schedule.init_mode == "decimate_source" else 1
        anchor = q0 if anchor_side == 0 else q1
        target = schedule.coarse_faces
        if target is None:
            # choose so the last level lands near the anchor resolution
            n_sub = (len(schedule.levels) - 1
                     if schedule.subdivide_between_levels else 0)
            target = max(4, int(round(anchor.n_faces / 4.0 ** n_sub)))
        init = decimate(anchor, target) if anchor.n_faces > target else anchor
    if use_texture:
        init = transfer_texture(init, anchor)
    elif init.texture is not None:
        init = init.with_texture(None)
    return init, anchor, anchor_side


def multires_match(q0, q1, schedule, cfg):
    """Coarse-to-fine symmetric matching.

    Both free meshes start as the same coarse mesh. After each level they
    are subdivided 1-to-4 and, when a texture kernel is active, re-textured
    by nearest-vertex transfer from the anchor data mesh (the mesh named by
    init_mode), sampled at the anchor-side free mesh. The per-level kernel
    scale and penalty weight override the ones in ``cfg``.

    Returns (matched_source, matched_target, [LevelReport, ...]).
    """
    use_texture = cfg.kernel.tau_scale is not None
    if use_texture and (q0.texture is None or q1.texture is None):
        raise TextureError(
            "texture kernel requested but the data meshes are not both "
            "textured")
    init, anchor, anchor_side = _initial_pair(q0, q1, schedule, use_texture)
    q0t = q1t = init
    reports = []
    configs = []  # per-level (initial pair, final pair) for the common view
    for i, level in enumerate(schedule.levels):
        if i > 0 and schedule.subdivide_between_levels:
            q0t = subdivide(q0t)
            q1t = subdivide(q1t)
            if use_texture:
                anchor_free = q0t if anchor_side == 0 else q1t
                tex = transfer_texture(anchor_free, anchor).texture
                q0t = q0t.with_texture(tex)
                q1t = q1t.with_texture(tex)
        cfg_level = dataclasses.replace(
            cfg, lam=level.lam, kernel=cfg.kernel.replace(sigma=level.sigma))
        initial_terms = energy_mod.symmetric_energy_terms(
            q0t, q1t, q0, q1, cfg_level)
        init_pair = (q0t, q1t)
        q0t, q1t, opt_report = match(q0t, q1t, q0, q1, cfg_level, level.optim)
        final_terms = energy_mod.symmetric_energy_terms(
            q0t, q1t, q0, q1, cfg_level)
        configs.append((init_pair, (q0t, q1t)))
        reports.append(LevelReport(
            sigma=level.sigma, lam=level.lam, faces=q0t.n_faces,
            initial_terms=initial_terms, final_terms=final_terms,
            optim=opt_report))
    last = schedule.levels[-1]
    cfg_last = dataclasses.replace(
        cfg, lam=last.lam, kernel=cfg.kernel.replace(sigma=last.sigma))
    for report, (pair0, pair1) in zip(reports, configs):
        report.initial_terms_common = energy_mod.symmetric_energy_terms(
            pair0[0], pair0[1], q0, q1, cfg_last)
        report.final_terms_common = energy_mod.symmetric_energy_terms(
            pair1[0], pair1[1], q0, q1, cfg_last)
    return q0t, q1t, reports


def _tightened(opt):
    """Optimizer settings for inversions: inherit the level settings but
    run to a much flatter plateau (the inversion residual is the quality
    measure of interpolation)."""
    return dataclasses.replace(
        opt,
        max_iters=max(opt.max_iters, 1000),
        grad_tol=min(opt.grad_tol, 1e-10),
        rel_f_tol=min(opt.rel_f_tol, 1e-12))


def invert_srnf(target, init, opt, target_srcf=None, srcf_weight=0.0):
    """Recover a mesh whose first-order feature field matches ``target``,
    starting the minimization at ``init`` (same combinatorics).

    The energy is translation invariant; the result is pinned by moving its
    vertex centroid back onto the centroid of ``init``.
    """
    if target.values.shape != (init.n_faces, 3):
        raise ConfigError(
            f"target field has shape {target.values.shape}, expected "
            f"{(init.n_faces, 3)}")
    shape = init.vertices.shape

    def objective(x):
        m = init.with_vertices(x.reshape(shape))
        val, grad = energy_mod.inversion_energy_grad(
            m, target, target_srcf, srcf_weight)
        return val, grad.ravel()

    x, report = lbfgs.minimize(objective, init.vertices.ravel(), opt)
    verts = x.reshape(shape)
    verts = verts + (init.vertices.mean(axis=0) - verts.mean(axis=0))
    logger.debug("inversion finished: %s after %d iterations, residual %.3e",
                 report.status, report.iterations, report.final_value)
    return init.with_vertices(verts)


def geodesic(q0, q1, schedule, cfg, n_samples):
    """Match the data meshes, then interpolate on the straight feature-space
    segment between the matched pair.

    Endpoints are the matched meshes themselves. Interior samples invert the
    interpolated feature field, initialized at the linear vertex
    interpolation (exact whenever the segment stays in the feature map's
    range).
    """
    if n_samples < 2:
        raise ConfigError("n_samples must be at least 2")
    q0t, q1t, reports = multires_match(q0, q1, schedule, cfg)
    times = np.linspace(0.0, 1.0, n_samples)
    n0 = features.srnf(q0t).values
    n1 = features.srnf(q1t).values
    opt = _tightened(schedule.levels[-1].optim)
    samples = [q0t]
    for t in times[1:-1]:
        target = SrnfField((1.0 - t) * n0 + t * n1)
        init = q0t.with_vertices(
            (1.0 - t) * q0t.vertices + t * q1t.vertices)
        samples.append(invert_srnf(target, init, opt))
    samples.append(q1t)
    return GeodesicPath(samples=samples, times=times)


def discrepancy(q0, q1, schedule, cfg):
    """Symmetrized shape discrepancy: the mean of the final matching
    energies of two runs, one initialized with the source topology and one
    with the target topology."""
    vals = []
    for mode in ("decimate_source", "decimate_target"):
        sched = dataclasses.replace(schedule, init_mode=mode, template=None)
        _, _, reports = multires_match(q0, q1, sched, cfg)
        vals.append(reports[-1].final_terms["total"])
    return 0.5 * (vals[0] + vals[1])


def _distance_job(args):
    i, j, q0, q1, schedule, cfg = args
    return i, j, discrepancy(q0, q1, schedule, cfg)


def distance_matrix(meshes, schedule, cfg, jobs=1):
    """Symmetric matrix of pairwise discrepancies with a zero diagonal.

    Failed pairs are NaN; the second return value lists (i, j, reason).
    Pairs are independent and can run in parallel processes.
    """
    meshes = list(meshes)
    n = len(meshes)
    if n < 2:
        raise ConfigError("need at least 2 meshes")
    mat = np.zeros((n, n))
    failures = []
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {
                pool.submit(_distance_job,
                            (i, j, meshes[i], meshes[j], schedule, cfg)):
                (i, j) for i, j in pairs}
            for fut, (i, j) in futures.items():
                try:
                    _, _, val = fut.result()
                    mat[i, j] = mat[j, i] = val
                except Exception as exc:  # job isolation, recorded as NaN
                    mat[i, j] = mat[j, i] = np.nan
                    failures.append((i, j, str(exc)))
    else:
        for i, j in pairs:
            try:
                _, _, val = _distance_job(
                    (i, j, meshes[i], meshes[j], schedule, cfg))
                mat[i, j] = mat[j, i] = val
            except Exception as exc:
                mat[i, j] = mat[j, i] = np.nan
                failures.append((i, j, str(exc)))
    return mat, failures


def karcher_mean(meshes, template, iterations, schedule, cfg, seed=0,
                 trace_out=None):
    """Iterative centroid of a mesh population.

    The running mean keeps the template's connectivity: each inner matching
    starts from the current mean as an explicit template and never
    subdivides. After matching the mean to input j (in seeded shuffled
    order), the mean's feature field moves toward the matched input with
    weight 1/((i-1)n + j) and is inverted back to a mesh.

    ``trace_out``, when given, collects one dict per update with the
    matching energy and the inversion residual.
    """
    meshes = list(meshes)
    if not meshes:
        raise ConfigError("need at least one mesh")
    rng = np.random.default_rng(seed)
    mean = template
    n = len(meshes)
    opt = _tightened(schedule.levels[-1].optim)
    for it in range(1, iterations + 1):
        order = rng.permutation(n)
        for pos, idx in enumerate(order, start=1):
            sched = dataclasses.replace(
                schedule, init_mode="template", template=mean,
                subdivide_between_levels=False)
            mean_t, other_t, reports = multires_match(
                mean, meshes[idx], sched, cfg)
            w = 1.0 / ((it - 1) * n + pos)
            blend = SrnfField(
                features.srnf(mean_t).values
                + w * (features.srnf(other_t).values
                       - features.srnf(mean_t).values))
            init = mean_t.with_vertices(
                mean_t.vertices + w * (other_t.vertices - mean_t.vertices))
            mean = invert_srnf(blend, init, opt)
            logger.info("mean update pass %d input %d (weight %.4f)",
                        it, int(idx), w)
            if trace_out is not None:
                residual = energy_mod.inversion_energy(mean, blend)
                trace_out.append({
                    "pass": it,
                    "input": int(idx),
                    "weight": w,
                    "match_energy": reports[-1].final_terms["total"],
                    "inversion_residual": residual,
                })
    return mean
