"""Ground truth for the reaction-diffusion system.

The system is u_t = D*u_xx + K*u^2 on x in [0, L], t in [0, 10], with
u(x, 0) = f(x) and homogeneous Dirichlet boundaries u(0, t) = u(L, t) = 0.
It is solved with an explicit forward-time centered-space (FTCS) march at
dx = L/200, dt = 1e-3, storing every 100th time step so the stored field is
always 201 x 101 regardless of L. All admissible input functions f vanish
at both ends, which keeps the initial condition compatible with the
boundary condition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OracleError, ValidationError

TIME_HORIZON = 10.0
GRID_NX = 201
GRID_NT = 101
BASE_DX_CELLS = 200  # internal spatial step dx = L / 200
BASE_DT = 1e-3
PERIODIC_COEFF_COUNT = 5
PERIODIC_COEFF_BOUND = 0.4

FUNCTION_KINDS = ("periodic", "quadratic", "cubic", "trigonometric")


@dataclass(frozen=True)
class InputFunctionSpec:
    """An initial-condition function f with f(0) = f(L) = 0.

    Kinds: ``periodic`` is a 5-term sine series sum_k A_k sin(k*pi*x/L) with
    |A_k| <= 0.4; ``quadratic`` is x(x-L); ``cubic`` is x(x-L)(x-L/2);
    ``trigonometric`` is x/L - tan(pi*x/(4L)).
    """

    kind: str
    length: float = 1.0
    coefficients: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.kind not in FUNCTION_KINDS:
            raise ValidationError(f"unknown input-function kind {self.kind!r}")
        if not (self.length > 0):
            raise ValidationError(f"domain length must be positive, got {self.length}")
        if self.kind == "periodic":
            if self.coefficients is None or len(self.coefficients) != PERIODIC_COEFF_COUNT:
                raise ValidationError(
                    f"periodic spec needs exactly {PERIODIC_COEFF_COUNT} coefficients"
                )
            if any(abs(a) > PERIODIC_COEFF_BOUND for a in self.coefficients):
                raise ValidationError(
                    f"periodic coefficients must satisfy |A_k| <= {PERIODIC_COEFF_BOUND}"
                )
        elif self.coefficients is not None:
            raise ValidationError(f"{self.kind} input function takes no coefficients")

    def __call__(self, x):
        return eval_input_function(self, x)


def eval_input_function(spec: InputFunctionSpec, x):
    """Evaluate f(x); x may be a scalar or an array within [0, L].

    The boundary values f(0) and f(L) are returned as exact zeros (the
    closed forms vanish there analytically; sin(k*pi) would otherwise leave
    ~1e-16 residue that later exact-equality invariants trip on).
    """
    arr = np.asarray(x, dtype=np.float64)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    L = spec.length
    if np.any(arr < 0.0) or np.any(arr > L):
        raise ValidationError(f"coordinate outside [0, {L}]")

    if spec.kind == "periodic":
        k = np.arange(1, PERIODIC_COEFF_COUNT + 1)
        coeffs = np.asarray(spec.coefficients, dtype=np.float64)
        values = np.sin(np.outer(arr, k) * (np.pi / L)) @ coeffs
    elif spec.kind == "quadratic":
        values = arr * (arr - L)
    elif spec.kind == "cubic":
        values = arr * (arr - L) * (arr - L / 2.0)
    else:  # trigonometric
        values = arr / L - np.tan(np.pi * arr / (4.0 * L))
    values = np.where((arr == 0.0) | (arr == L), 0.0, values)
    return float(values[0]) if scalar else values


def random_periodic(seed: int, length: float = 1.0) -> InputFunctionSpec:
    """Periodic spec with 5 coefficients drawn i.i.d. uniform on [-0.4, 0.4]."""
    rng = np.random.default_rng(seed)
    coeffs = rng.uniform(-PERIODIC_COEFF_BOUND, PERIODIC_COEFF_BOUND, PERIODIC_COEFF_COUNT)
    return InputFunctionSpec("periodic", length=length, coefficients=tuple(float(a) for a in coeffs))


@dataclass(frozen=True)
class SpaceTimeGrid:
    """The stored 201 x 101 grid: x over [0, L], t over [0, 10], equispaced."""

    length: float
    x_coords: np.ndarray
    t_coords: np.ndarray

    def __post_init__(self) -> None:
        if self.x_coords.shape != (GRID_NX,) or self.t_coords.shape != (GRID_NT,):
            raise ValidationError(
                f"grid must be {GRID_NX} x {GRID_NT} nodes, got "
                f"{self.x_coords.shape} x {self.t_coords.shape}"
            )
        for name, coords, hi in (("x", self.x_coords, self.length), ("t", self.t_coords, TIME_HORIZON)):
            if coords[0] != 0.0 or coords[-1] != hi:
                raise ValidationError(f"{name}_coords must span [0, {hi}]")
            steps = np.diff(coords)
            if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-12, atol=0.0):
                raise ValidationError(f"{name}_coords must be strictly increasing and equispaced")

    @property
    def nx(self) -> int:
        return GRID_NX

    @property
    def nt(self) -> int:
        return GRID_NT


def default_grid(length: float) -> SpaceTimeGrid:
    return SpaceTimeGrid(
        length=length,
        x_coords=np.linspace(0.0, length, GRID_NX),
        t_coords=np.linspace(0.0, TIME_HORIZON, GRID_NT),
    )


@dataclass(frozen=True)
class PdeParams:
    """Diffusion coefficient and reaction rate of the system."""

    diffusion: float
    reaction: float

    def __post_init__(self) -> None:
        if not (self.diffusion > 0):
            raise ValidationError(f"diffusion must be > 0, got {self.diffusion}")
        if self.reaction < 0:
            raise ValidationError(f"reaction must be >= 0, got {self.reaction}")


@dataclass(frozen=True)
class SolutionField:
    """State u on the stored grid; values[i, j] = u(x_i, t_j)."""

    grid: SpaceTimeGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values.shape != (self.grid.nx, self.grid.nt):
            raise ValidationError(
                f"field shape {self.values.shape} != grid {(self.grid.nx, self.grid.nt)}"
            )


def ftcs_solve(
    params: PdeParams,
    spec: InputFunctionSpec,
    grid: SpaceTimeGrid | None = None,
    refinement: int = 1,
) -> SolutionField:
    """March the FTCS scheme and return the stored 201 x 101 field.

    ``refinement`` r > 1 halves/divides both steps (dx = L/(200r),
    dt = 1e-3/r) while still returning the standard stored grid; it exists
    for the grid-convergence self-check. The stability bound
    D*dt/dx^2 <= 0.5 is verified before marching, and a reaction blow-up
    (non-finite values) aborts with the offending time.
    """
    if refinement < 1:
        raise ValidationError(f"refinement must be >= 1, got {refinement}")
    L = spec.length
    if grid is None:
        grid = default_grid(L)
    elif grid.length != L:
        raise ValidationError(f"grid length {grid.length} != input-function length {L}")

    dx = L / (BASE_DX_CELLS * refinement)
    dt = BASE_DT / refinement
    if params.diffusion * dt / dx**2 > 0.5:
        raise ValidationError(
            f"FTCS unstable: D*dt/dx^2 = {params.diffusion * dt / dx**2:.3g} > 0.5"
        )

    if refinement == 1:
        x_internal = grid.x_coords
    else:
        x_internal = np.linspace(0.0, L, BASE_DX_CELLS * refinement + 1)
    steps_per_snapshot = round((TIME_HORIZON / (GRID_NT - 1)) / dt)

    u = np.asarray(spec(x_internal), dtype=np.float64).copy()
    values = np.empty((grid.nx, grid.nt))
    values[:, 0] = u[::refinement]

    d_coeff = params.diffusion * dt / dx**2
    k_coeff = params.reaction * dt
    with np.errstate(over="ignore", invalid="ignore"):
        for snap in range(1, GRID_NT):
            for _ in range(steps_per_snapshot):
                interior = u[1:-1]
                u[1:-1] = (
                    interior
                    + d_coeff * (u[2:] - 2.0 * interior + u[:-2])
                    + k_coeff * interior * interior
                )
            if not np.isfinite(u).all():
                t_bad = grid.t_coords[snap]
                raise OracleError(f"solution became non-finite by t = {t_bad:g}")
            values[:, snap] = u[::refinement]
    return SolutionField(grid=grid, values=values)
