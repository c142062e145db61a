"""Data-generating processes for the simulations.

A design object draws everything that stays fixed across replications once
(instruments, controls, first-stage coefficients, the projection bundle) and
then produces one Dataset per replication from that replication's stream.
"""

from functools import cached_property

import numpy as np
from tenacity import RetryCallState, Retrying, retry_if_exception_type, stop_after_attempt

from manyiv.core.projections import ProjectionBundle
from manyiv.errors import ManyIVError
from manyiv.logger import get_logger
from manyiv.models.dataset import Dataset
from manyiv.models.outcomes import AssumptionReport, ZeroDiagA
from manyiv.models.simulation import SimDesign
from manyiv.services.zero_diagonal import (
    AssumptionViolationError,
    ThetaSolveError,
    compute_theta,
    require_balanced_design,
)
from manyiv.simulation.rng import DESIGN_INDEX, Stream, mix64

logger = get_logger(__name__)

SPARSE_LARGE = 2.0
SPARSE_SMALL = 0.001
DENSE_VALUE = 0.316
MIN_RATIO_WEIGHT = 1e-12


class DesignInfeasibleError(ManyIVError):
    """The design cannot be realized (no identifying signal, or balance never reached)."""


def _rescale(pi: np.ndarray, signal: np.ndarray, jack: np.ndarray, k: int, target: float) -> np.ndarray:
    """Scale π so that μ²/√K equals ``target`` exactly."""
    if target == 0.0:
        return np.zeros_like(pi)
    mu2 = float(signal @ jack @ signal)
    if mu2 <= 0.0:
        raise DesignInfeasibleError(f"mu^2 = {mu2:.3e} before scaling; strength target unreachable")
    return pi * np.sqrt(target * np.sqrt(k) / mu2)


def replication_seed(design: SimDesign, rep: int) -> int:
    """Stream seed of replication ``rep``; antithetic pairs share one."""
    return mix64(design.seed, rep // 2 if design.antithetic else rep)


def _replication_stream(design: SimDesign, rep: int) -> tuple[Stream, float]:
    sign = -1.0 if design.antithetic and rep % 2 else 1.0
    return Stream(replication_seed(design, rep)), sign


def _first_stage_shape(design: SimDesign) -> np.ndarray:
    match design.first_stage:
        case "sparse":
            pi = np.full(design.k_z, SPARSE_SMALL)
            pi[-1] = SPARSE_LARGE
            return pi
        case "dense":
            return np.full(design.k_z, DENSE_VALUE)
        case _:
            return np.asarray(design.pi, dtype=float)


class GroupDesign:
    """Balanced group-indicator instruments, X = π′Z + v, Y = βX + e."""

    def __init__(self, design: SimDesign, verify: bool = True) -> None:
        self.design = design
        n, k = design.n, design.k_z
        self.labels = np.repeat(np.arange(k), design.group_size)
        self.Z = np.zeros((n, k))
        self.Z[np.arange(n), self.labels] = 1.0

        template = Dataset(y=np.zeros(n), x=np.zeros(n), Z=self.Z, W=np.zeros((n, 0)), group_labels=self.labels)
        self.bundle = ProjectionBundle.from_groups(template, verify=verify)

        shape = _first_stage_shape(design)
        self.pi = _rescale(shape, self.Z @ shape, self.bundle.jack, self.bundle.k_z, design.strength_target)
        self.signal = self.Z @ self.pi

        if design.heteroskedasticity == "weights":
            self.scale = np.asarray(design.weights, dtype=float)[self.labels]
        else:
            self.scale = np.ones(n)

    @property
    def sigma2(self) -> np.ndarray:
        return self.scale**2

    @property
    def gamma(self) -> np.ndarray:
        """E[X_i e_i] = ρ σ_i."""
        return self.design.rho * self.scale

    def draw(self, rep: int) -> Dataset:
        d = self.design
        stream, sign = _replication_stream(d, rep)
        z1 = sign * stream.normal(d.n)
        z2 = sign * stream.normal(d.n)
        e = self.scale * z1
        v = d.rho * z1 + np.sqrt(1.0 - d.rho**2) * z2
        x = self.signal + v
        y = d.beta_true * x + e
        return Dataset(y=y, x=x, Z=self.Z, W=np.zeros((d.n, 0)), group_labels=self.labels)


class ControlsDesign:
    """Many-controls design: Ỹ = γ′W + βX̃ + ωε + ℓv, X̃ = π′Z⊥ + δ′W + v.

    W holds an intercept, dummy blocks and continuous columns; Z are Gaussian
    columns correlated with the continuous controls and then residualized on
    W. W, Z, π, γ, δ, ω and the loading ℓ = λω are drawn once; designs
    failing the balanced-design check are redrawn.

    With ``leverage_cells`` the first 3·cells observations form
    three-observation control cells. The last ``leverage_instruments``
    columns of Z live on those cells only, as pairs of columns spanned by
    zero-sum triples, and carry no first-stage signal. Bias targets then
    solve for an extra cell-concentrated loading (β̂₁) and for γ (β̂₂) so
    that the first-order relative biases of the two JIVEs equal the targets,
    while the leading ratio bias of β̂₃ cancels.
    """

    def __init__(self, design: SimDesign, max_redraws: int = 20, verify: bool = True) -> None:
        self.design = design
        self._verify = verify
        retrying = Retrying(
            stop=stop_after_attempt(max_redraws),
            retry=retry_if_exception_type((AssumptionViolationError, ThetaSolveError)),
            reraise=True,
            before_sleep=self._log_redraw,
        )
        try:
            for attempt in retrying:
                with attempt:
                    self._build(attempt.retry_state.attempt_number - 1)
        except (AssumptionViolationError, ThetaSolveError) as exc:
            raise DesignInfeasibleError(
                f"balanced design not reached in {max_redraws} draws: {exc}"
            ) from exc

    @staticmethod
    def _log_redraw(state: RetryCallState) -> None:
        exc = state.outcome.exception() if state.outcome else None
        logger.info("design_redraw", attempt=state.attempt_number, reason=str(exc))

    def _controls(self, stream: Stream) -> np.ndarray:
        d = self.design
        n = d.n
        cells = d.leverage_cells
        cell_rows = 3 * cells
        levels = d.levels_per_categorical
        budget = d.k_w - 1 - cells
        n_cat = int(d.dummy_share * budget) // (levels - 1)
        n_cont = budget - n_cat * (levels - 1)

        blocks = [np.ones((n, 1))]
        if cells:
            cell_of = np.full(n, -1)
            cell_of[:cell_rows] = np.repeat(np.arange(cells), 3)
            blocks.append((cell_of[:, None] == np.arange(cells)[None, :]).astype(float))
        for _ in range(n_cat):
            codes = np.argsort(stream.uniform(n)) % levels
            codes[:cell_rows] = 0
            dummies = (codes[:, None] == np.arange(1, levels)[None, :]).astype(float)
            blocks.append(dummies)
        self.continuous = stream.normal((n, n_cont))
        self.continuous[:cell_rows] = 0.0
        blocks.append(self.continuous)
        return np.hstack(blocks)

    def _leverage_block(self) -> np.ndarray:
        """Instrument columns supported on the cells, two per plane.

        Each cell holds the triple (2√3, 0), (−√3, 1), (−√3, −1), rotated a
        quarter turn on every other cell of a plane, so the plane's Gram
        matrix is isotropic and P⊥ puts leverage 3:1:1 on the cell rows.
        """
        d = self.design
        cells, k_b = d.leverage_cells, d.leverage_instruments
        planes = k_b // 2
        root3 = np.sqrt(3.0)
        base = np.array([[2.0 * root3, 0.0], [-root3, 1.0], [-root3, -1.0]])
        quarter = base[:, ::-1] * np.array([-1.0, 1.0])
        block = np.zeros((d.n, k_b))
        for cell in range(cells):
            plane = cell % planes
            pattern = base if (cell // planes) % 2 == 0 else quarter
            block[3 * cell : 3 * cell + 3, 2 * plane : 2 * plane + 2] = pattern
        return block

    def _build(self, attempt: int) -> None:
        d = self.design
        stream = Stream(mix64(d.seed, DESIGN_INDEX + attempt))
        w = self._controls(stream)

        z = stream.normal((d.n, d.k_z))
        n_cont = self.continuous.shape[1]
        if n_cont:
            loading = stream.normal((n_cont, d.k_z)) / np.sqrt(n_cont)
            z = z + d.instrument_control_corr * (self.continuous @ loading)
        k_b = d.leverage_instruments
        if k_b:
            z[: 3 * d.leverage_cells] = 0.0
            z[:, d.k_z - k_b :] = self._leverage_block()
        q, _ = np.linalg.qr(w)
        z = z - q @ (q.T @ z)

        template = Dataset.from_arrays(np.zeros(d.n), np.zeros(d.n), z, w)
        bundle = ProjectionBundle.build(template, verify=self._verify)
        weights = compute_theta(bundle, np.asarray(template.W), verify=self._verify)
        self.assumption: AssumptionReport = require_balanced_design(bundle, weights.theta)

        self.W = np.asarray(template.W)
        self.Z = np.asarray(template.Z)
        self.bundle = bundle
        self.weights: ZeroDiagA = weights
        if d.first_stage == "custom":
            shape = np.asarray(d.pi, dtype=float)
        else:
            shape = np.full(self.Z.shape[1], DENSE_VALUE)
            if k_b:
                shape[-k_b:] = 0.0
        if shape.shape[0] != self.Z.shape[1]:
            raise DesignInfeasibleError("custom pi does not match the retained instruments")
        self.pi = _rescale(shape, self.Z @ shape, bundle.jack_perp, bundle.k_z, d.strength_target)
        self.signal = self.Z @ self.pi

        k_w = self.W.shape[1]
        self.gamma_coef = d.gamma_scale * stream.normal(k_w)
        self.delta_coef = d.delta_scale * stream.normal(k_w)
        self.omega = np.abs(stream.normal(d.n)) if d.heteroskedastic_scale else np.ones(d.n)
        self.loading = d.error_loading * self.omega
        if d.beta1_bias_target is not None:
            self.loading = self.loading + self._extra_loading(d.beta1_bias_target)
        if d.beta2_bias_target is not None:
            self.gamma_coef = self._calibrated_gamma(d.beta2_bias_target)
        logger.debug("controls_design_built", attempt=attempt, k_z=bundle.k_z, k_w=bundle.k_w)

    @cached_property
    def beta1_diagonal(self) -> np.ndarray:
        """c_k = (M_W J M_W)_kk with J the diagonal-removed P⊥."""
        mw = self.bundle.M_W
        return np.sum((mw @ self.bundle.jack_perp) * mw, axis=1)

    def expected_beta1_terms(self) -> tuple[float, float]:
        """E[numerator − β·denominator] and E[denominator] of β̂₁ to first order."""
        c = self.beta1_diagonal
        jack = self.bundle.jack_perp
        return float(self.loading @ c), float(self.signal @ jack @ self.signal + c.sum())

    def expected_beta2_terms(self) -> tuple[float, float]:
        """E[numerator − β·denominator] and E[denominator] of β̂₂ to first order."""
        jack = self.bundle.jack_perp
        mean_x = self.signal + self.W @ self.delta_coef
        return float(mean_x @ jack @ self.W @ self.gamma_coef), float(mean_x @ jack @ mean_x)

    def beta3_ratio_weights(self) -> np.ndarray:
        """a_k = (As)_k² + Σ_i A_ik²; the leading ratio bias of β̂₃ is −2Σℓ_k a_k / (s′As)²."""
        a = self.weights.A
        return (a @ self.signal) ** 2 + np.sum(a**2, axis=0)

    def _extra_loading(self, target: float) -> np.ndarray:
        """Least Σx²a loading x with Σ(ℓ+x)c = target·β·E[D₁] and Σ(ℓ+x)a = 0."""
        d = self.design
        c = self.beta1_diagonal
        a = np.maximum(self.beta3_ratio_weights(), MIN_RATIO_WEIGHT)
        _, mean_den = self.expected_beta1_terms()
        rhs = np.array([target * d.beta_true * mean_den - self.loading @ c, -(self.loading @ a)])
        gram = np.array([[np.sum(c**2 / a), c.sum()], [c.sum(), a.sum()]])
        try:
            alpha, shift = np.linalg.solve(gram, rhs)
        except np.linalg.LinAlgError as exc:
            raise DesignInfeasibleError("leverage cells do not separate the beta1 and beta3 biases") from exc
        return alpha * c / a + shift

    def _calibrated_gamma(self, target: float) -> np.ndarray:
        """Shift γ along W′J X̄ until the first-order β̂₂ bias equals the target."""
        d = self.design
        jack = self.bundle.jack_perp
        mean_x = self.signal + self.W @ self.delta_coef
        direction = self.W.T @ (jack @ mean_x)
        slope = float(direction @ direction)
        excess, mean_den = self.expected_beta2_terms()
        if slope <= MIN_RATIO_WEIGHT or mean_den <= 0.0:
            raise DesignInfeasibleError("beta2 bias target unreachable: controls do not enter X'JW")
        return self.gamma_coef + (target * d.beta_true * mean_den - excess) / slope * direction

    def draw(self, rep: int) -> Dataset:
        d = self.design
        stream, sign = _replication_stream(d, rep)
        eps = sign * stream.normal(d.n)
        v = sign * stream.normal(d.n)
        x = self.signal + self.W @ self.delta_coef + v
        y = self.W @ self.gamma_coef + d.beta_true * x + self.omega * eps + self.loading * v
        return Dataset(y=y, x=x, Z=self.Z, W=self.W)


def build_design(design: SimDesign, max_redraws: int = 20, verify: bool = True) -> GroupDesign | ControlsDesign:
    if design.layout == "groups":
        return GroupDesign(design, verify)
    return ControlsDesign(design, max_redraws, verify)


def gen_group_design(design: SimDesign, rep: int) -> Dataset:
    return GroupDesign(design).draw(rep)


def gen_controls_design(design: SimDesign, rep: int, max_redraws: int = 20) -> Dataset:
    return ControlsDesign(design, max_redraws).draw(rep)
