"""
Per-unit conventions, branch impedances and rotating-frame vectors.

All electrical quantities are per-unit on the plant base. Space vectors are
power-invariant dq pairs, so ``p = v_d*i_d + v_q*i_q`` carries no 3/2
factor. Positive ``q`` means the source injects inductive reactive power.

"""
import math
from dataclasses import dataclass

from numba import njit

from gfmosc.errors import ContractError, DomainError

COMMON_FRAME = "common"


@dataclass(frozen=True)
class PerUnitBase:
    """
    System bases.

    Parameters
    ----------
    s_base : float
        Apparent power base, normalized to 1.
    v_base : float
        Voltage base, normalized to 1.
    f_nominal : float
        Fundamental frequency (Hz).

    """
    s_base: float = 1.0
    v_base: float = 1.0
    f_nominal: float = 50.0

    def __post_init__(self):
        if not self.f_nominal > 0:
            raise DomainError(f"f_nominal must be positive, got {self.f_nominal}")

    @property
    def omega_n(self):
        """Nominal angular frequency (rad/s)."""
        return 2*math.pi*self.f_nominal


@dataclass(frozen=True)
class Impedance:
    """Series impedance ``r + jx`` in pu, with ``x`` evaluated at the nominal frequency."""
    r: float
    x: float

    def __post_init__(self):
        if self.r < 0 or self.x < 0:
            raise DomainError(f"branch impedance must have r >= 0 and x >= 0, got {self}")

    @property
    def magnitude(self):
        return math.hypot(self.r, self.x)

    @property
    def angle(self):
        return math.atan2(self.x, self.r)

    def __add__(self, other):
        return Impedance(self.r + other.r, self.x + other.x)

    def scaled(self, factor):
        """Return the impedance multiplied by a non-negative real factor."""
        return Impedance(factor*self.r, factor*self.x)

    def __complex__(self):
        return complex(self.r, self.x)


@dataclass(frozen=True)
class DqVector:
    """A space vector resolved in a named rotating frame."""
    d: float
    q: float
    frame: str = COMMON_FRAME

    @property
    def magnitude(self):
        return math.hypot(self.d, self.q)

    def __complex__(self):
        return complex(self.d, self.q)

    @classmethod
    def from_complex(cls, z, frame=COMMON_FRAME):
        return cls(z.real, z.imag, frame)


def scr_to_impedance(scr, x_over_r):
    """
    Thevenin impedance of a grid with the given short-circuit ratio.

    Parameters
    ----------
    scr : float
        Short-circuit ratio, so that ``|Z| = 1/scr`` on the plant base.
    x_over_r : float
        Reactance-to-resistance ratio.

    Returns
    -------
    Impedance

    """
    if not scr > 0:
        raise DomainError(f"scr must be positive, got {scr}")
    if not x_over_r > 0:
        raise DomainError(f"x_over_r must be positive, got {x_over_r}")
    z = 1.0/scr
    r = z/math.sqrt(1.0 + x_over_r*x_over_r)
    return Impedance(r, x_over_r*r)


@njit(cache=True)
def rotate(d, q, angle):
    """Express ``(d, q)`` in a frame leading the current one by ``angle``."""
    c = math.cos(angle)
    s = math.sin(angle)
    return c*d + s*q, -s*d + c*q


@njit(cache=True)
def power_pq(v_d, v_q, i_d, i_q):
    return v_d*i_d + v_q*i_q, v_q*i_d - v_d*i_q


def rotate_frame(v, delta_theta, frame=None):
    """
    Rotate a vector into a frame leading by ``delta_theta`` radians.

    The result keeps the magnitude of ``v``. ``frame`` labels the target
    frame and defaults to the source label.

    """
    d, q = rotate(float(v.d), float(v.q), float(delta_theta))
    return DqVector(d, q, v.frame if frame is None else frame)


def compute_pq(v, i):
    """Active and reactive power delivered by current ``i`` at voltage ``v``."""
    if v.frame != i.frame:
        raise ContractError(f"voltage in frame '{v.frame}' but current in frame '{i.frame}'")
    return power_pq(float(v.d), float(v.q), float(i.d), float(i.q))
