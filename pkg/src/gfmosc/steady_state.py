"""
Newton solve of the closed-loop equilibrium.

The unknowns are the active state slots and the equations are their time
derivatives, so a solution is an exact fixed point of the simulator's
derivative map. The Jacobian is built by central differences on the same
kernel; the solve is used for initialization and as the reference the
simulator is checked against.

"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from gfmosc.controls import ControlKind
from gfmosc.errors import InfeasibleOperatingPoint
from gfmosc.system import (
    NS, N_STATES, S_DELTA, S_IL, S_IO, S_PF, S_QF, S_VO, S_X, active_mask, evaluate,
    pack_params, to_control_states, to_network_state)

log = logging.getLogger(__name__)

MAX_ITERATIONS = 50
TOLERANCE = 1e-10


@dataclass(frozen=True)
class SteadyState:
    x: np.ndarray
    network: object
    controls: tuple
    residual: float
    iterations: int


def initial_guess(network, converters):
    """Phasor estimate: unity voltages, reference power flowing through the network."""
    x = np.zeros(N_STATES)
    p_tot = sum(c.outer.p_ref for c in converters)
    z_g = complex(network.z_grid)
    v_pcc = network.v_inf + z_g*p_tot/network.v_inf
    for k, (train, conv) in enumerate(zip(network.trains, converters)):
        o = k*NS
        i_o = conv.outer.p_ref/max(abs(v_pcc), 0.1)*v_pcc/abs(v_pcc) if train.connected else 0j
        v_o = v_pcc + complex(train.z_branch)*i_o
        v_o *= conv.outer.v_ref/abs(v_o)
        i_l = i_o + 1j*train.c_f*v_o
        delta = math.atan2(v_o.imag, v_o.real)
        rot = np.exp(-1j*delta)
        x[o + S_IL:o + S_IL + 2] = i_l.real, i_l.imag
        x[o + S_VO:o + S_VO + 2] = v_o.real, v_o.imag
        x[o + S_IO:o + S_IO + 2] = i_o.real, i_o.imag
        x[o + S_DELTA] = delta
        if conv.kind is ControlKind.VADM:
            y = 1j*train.c_f*v_o*rot
            x[o + S_X:o + S_X + 2] = y.real, y.imag
        else:
            xi_c = train.r_f*i_l*rot
            x[o + S_X + 2:o + S_X + 4] = xi_c.real, xi_c.imag
        x[o + S_PF] = conv.outer.p_ref
    return x


def jacobian(fun, x, rel=1e-6):
    """Central-difference Jacobian with step ``max(rel, rel*|x_i|)``."""
    n = x.size
    f0 = fun(x)
    jac = np.empty((f0.size, n))
    for i in range(n):
        h = max(rel, rel*abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        jac[:, i] = (fun(xp) - fun(xm))/(2*h)
    return jac


def solve_steady_state(network, converters, cutoff=None, x0=None):
    """
    Equilibrium of the closed loop with the given network.

    Parameters
    ----------
    network : NetworkParams
    converters : tuple of ConverterParams
    cutoff : float, optional
        Measurement filter cutoff (rad/s); adds the filter states.
    x0 : ndarray, optional
        Full-length starting state; defaults to a phasor estimate.

    Returns
    -------
    SteadyState

    Raises
    ------
    InfeasibleOperatingPoint
        If Newton does not reach a residual of 1e-10 within 50 iterations.

    """
    p = pack_params(network, converters, cutoff)
    mask = active_mask(converters, cutoff)
    x = initial_guess(network, converters) if x0 is None else np.array(x0, dtype=float)
    x[~mask] = 0.0

    def residual(z):
        full = x.copy()
        full[mask] = z
        return evaluate(full, p)[0][mask]

    z = x[mask]
    f = residual(z)
    norm = np.max(np.abs(f))
    it = 0
    while norm > TOLERANCE:
        if it >= MAX_ITERATIONS or not np.isfinite(norm):
            raise InfeasibleOperatingPoint(
                f"Newton did not converge in {MAX_ITERATIONS} iterations (residual {norm:.3g}); "
                f"dispatch likely exceeds the transfer capability at SCR {network.scr:.3g}")
        it += 1
        jac = jacobian(residual, z)
        try:
            step = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(jac, -f, rcond=None)[0]
        # backtracking on the residual norm
        alpha = 1.0
        while True:
            z_new = z + alpha*step
            f_new = residual(z_new)
            norm_new = np.max(np.abs(f_new))
            if norm_new < norm or alpha < 1e-4:
                break
            alpha *= 0.5
        z, f, norm = z_new, f_new, norm_new
        log.debug("newton iteration %d: residual %.3e (alpha %.3g)", it, norm, alpha)
    x[mask] = z
    return SteadyState(x=x, network=to_network_state(x),
                       controls=to_control_states(x, converters, 0.0, network.base.omega_n),
                       residual=float(norm), iterations=it)
