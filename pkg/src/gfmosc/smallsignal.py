"""
Linearization, eigenvalues and participation factors.

The state matrix is taken by central differences on the same derivative
map the simulator integrates, restricted to the dynamic slots. Algebraic
quantities (the VSM0H speed, a zero-inductance admittance) never appear
as states, so no stiff surrogate is needed.
"""
import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from gfmosc.errors import GfmError, NumericalBlowup
from gfmosc.network import nominal_grid_impedance
from gfmosc.steady_state import solve_steady_state
from gfmosc.system import active_mask, evaluate, pack_params, state_labels
from gfmosc.units import scr_to_impedance

log = logging.getLogger(__name__)

REL_STEP = 1e-6
# eigenvector matrices worse conditioned than this are treated as defective
DEFECT_CONDITION = 1e10


@dataclass(frozen=True)
class LinearModel:
    state_labels: tuple
    a_matrix: np.ndarray
    operating_point: np.ndarray


@dataclass(frozen=True)
class ModeReport:
    eigenvalues: np.ndarray
    frequencies: np.ndarray
    damping_ratios: np.ndarray
    participation: tuple
    defective: np.ndarray

    def least_damped(self, oscillatory=True):
        """Index of the least-damped mode, by default among modes with Im > 0."""
        idx = np.arange(self.eigenvalues.size)
        if oscillatory:
            osc = idx[self.eigenvalues.imag > 1e-9]
            if osc.size:
                idx = osc
        return int(idx[np.argmin(self.damping_ratios[idx])])

    def top_states(self, mode, n=3):
        part = self.participation[mode]
        if part is None:
            return []
        return sorted(part.items(), key=lambda kv: -kv[1])[:n]

    def rows(self):
        out = []
        for i, lam in enumerate(self.eigenvalues):
            top = self.top_states(i)
            top += [("", math.nan)]*(3 - len(top))
            row = [lam.real, lam.imag, self.frequencies[i], self.damping_ratios[i]]
            for name, share in top:
                row += [name, share]
            out.append(row)
        return out

    def to_csv(self, path):
        head = "re,im,freq_hz,damping,top_state_1,top_share_1,top_state_2,top_share_2,top_state_3,top_share_3"
        with open(path, "w") as fh:
            fh.write(head + "\n")
            for row in self.rows():
                fh.write(",".join(v if isinstance(v, str) else f"{v:.12g}" for v in row) + "\n")


def fd_jacobian(fun, x, rel=REL_STEP):
    """Central-difference Jacobian with per-state step ``max(rel, rel*|x_i|)``."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(fun(x))
    jac = np.empty((f0.size, x.size))
    for i in range(x.size):
        h = max(rel, rel*abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        jac[:, i] = (np.asarray(fun(xp)) - np.asarray(fun(xm)))/(2*h)
    if not np.all(np.isfinite(jac)):
        raise NumericalBlowup("non-finite entry in the state matrix")
    return jac


def linearize_map(fun, x0, labels, rel=REL_STEP):
    """LinearModel of an arbitrary derivative map ``fun(x)`` at ``x0``."""
    return LinearModel(tuple(labels), fd_jacobian(fun, x0, rel), np.asarray(x0, dtype=float))


def linearize_network(network, converters, cutoff=None):
    """Linear model at the equilibrium of the given network and converters."""
    ss = solve_steady_state(network, converters, cutoff)
    p = pack_params(network, converters, cutoff)
    mask = active_mask(converters, cutoff)
    labels = [lab for lab, m in zip(state_labels(converters, cutoff), mask) if m]
    full = ss.x

    def fun(z):
        x = full.copy()
        x[mask] = z
        return evaluate(x, p)[0][mask]

    model = linearize_map(fun, full[mask], labels)
    return replace(model, operating_point=full.copy())


def linearize(scenario, post_event=False):
    """
    Linear model of a scenario at its pre-event equilibrium.

    ``post_event=True`` linearizes the network in force after the last
    event instead.
    """
    net = scenario.network_at(scenario.t_end) if post_event else scenario.network
    return linearize_network(net, scenario.converters, scenario.measurement_filter_cutoff)


def eigen_report(model):
    """Eigenvalues and normalized participation factors, least-damped first."""
    a = np.asarray(model.a_matrix, dtype=float)
    lam, phi = np.linalg.eig(a)
    cond = np.linalg.cond(phi)
    defective_all = not np.isfinite(cond) or cond > DEFECT_CONDITION
    psi = None if defective_all else np.linalg.inv(phi)
    mag = np.abs(lam)
    damping = np.where(mag > 0, -lam.real/np.where(mag > 0, mag, 1.0), -np.sign(lam.real))
    order = np.lexsort((lam.imag, damping))
    parts, defect = [], np.zeros(lam.size, dtype=bool)
    for i in order:
        if psi is None:
            parts.append(None)
            defect[len(parts) - 1] = True
            continue
        pf = np.abs(phi[:, i]*psi[i, :])
        total = pf.sum()
        if not total > 0:
            parts.append(None)
            defect[len(parts) - 1] = True
            continue
        parts.append({lab: float(v) for lab, v in zip(model.state_labels, pf/total)})
    if defect.any():
        log.warning("eigenvector matrix is ill-conditioned (cond %.3g); participation unavailable", cond)
    lam = lam[order]
    return ModeReport(eigenvalues=lam, frequencies=np.abs(lam.imag)/(2*math.pi),
                      damping_ratios=damping[order], participation=tuple(parts), defective=defect)


@dataclass(frozen=True)
class ScanPoint:
    scr: float
    scale: float
    min_damping: float = math.nan
    frequency: float = math.nan
    max_real: float = math.nan
    error: str = None

    @property
    def ok(self):
        return self.error is None


def scan_network(base, scr, scale):
    z = nominal_grid_impedance().scaled(scale)
    x_over_r = base.events[0].x_over_r if base.events else 5.0
    trains = tuple(replace(tr, z_array=z) for tr in base.network.trains)
    return replace(base.network, z_grid=scr_to_impedance(scr, x_over_r), trains=trains)


def stability_scan(base, scr_values, z_array_scales):
    """Least-damped oscillatory mode at every (scr, scale) grid point."""
    out = []
    for scr in scr_values:
        for scale in z_array_scales:
            try:
                net = scan_network(base, scr, scale)
                rep = eigen_report(linearize_network(net, base.converters,
                                                     base.measurement_filter_cutoff))
            except GfmError as exc:
                out.append(ScanPoint(scr, scale, error=str(exc)))
                continue
            i = rep.least_damped()
            out.append(ScanPoint(scr, scale, float(rep.damping_ratios[i]),
                                 float(rep.frequencies[i]), float(rep.eigenvalues.real.max())))
    return out
