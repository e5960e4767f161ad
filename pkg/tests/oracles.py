"""Independent reference implementations used by the test-suite.

Nothing here imports the package's solver, FET or crossbar code: the circuit
is rewritten from textbook relations (square-law MOSFETs with magnitudes,
node currents summed by hand, modified nodal analysis for the crossbar) so
that agreement is evidence rather than a tautology.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq


def mtj_pair(length_nm, width_nm, ra_ohm_um2, tmr0_percent):
    """(R_P, R_AP) at zero bias, computed in nm^2 to keep the units separate."""
    area_um2 = length_nm * width_nm * math.pi / 4 * 1e-6
    r_p = ra_ohm_um2 / area_um2
    return r_p, r_p * (1 + tmr0_percent / 100)


def square_law(v_ov, v_ds, beta):
    """Magnitude of a long-channel MOSFET current; v_ov and v_ds in the device's own sense."""
    if v_ov <= 0:
        return 0.0
    if v_ds < v_ov:
        return beta * (v_ov * v_ds - 0.5 * v_ds * v_ds)
    return 0.5 * beta * v_ov * v_ov


def out_node_balance(v_out, v_in, r_p, r_ap, beta_p, beta_n, vtp, vtn, vdd, vss):
    """Net current flowing *into* the output node (zero at the operating point)."""
    v_gate = (v_in * r_ap + v_out * r_p) / (r_p + r_ap)       # divider midpoint
    i_res = (v_in - v_out) / (r_p + r_ap)                     # through the MTJ pair into OUT
    i_pull_up = square_law(vdd - v_gate - abs(vtp), vdd - v_out, beta_p)
    i_pull_down = square_law(v_gate - vss - vtn, v_out - vss, beta_n)
    return i_res + i_pull_up - i_pull_down


def scan_root(v_in, params, step=1e-5, margin=0.5):
    """All roots of the output-node balance found by a dense scan, each refined by brentq."""
    vdd, vss = params["vdd"], params["vss"]
    grid = np.arange(vss - margin, vdd + margin + step, step)
    vals = _balance_vec(grid, v_in, **params)
    roots = []
    s = np.sign(vals)
    for k in np.flatnonzero(s[:-1] * s[1:] <= 0):
        if vals[k] == 0:
            roots.append(float(grid[k]))
            continue
        roots.append(brentq(out_node_balance, grid[k], grid[k + 1],
                            args=(v_in, *[params[n] for n in _ORDER]), xtol=1e-15, rtol=1e-15))
    return sorted(set(roots))


_ORDER = ("r_p", "r_ap", "beta_p", "beta_n", "vtp", "vtn", "vdd", "vss")


def _balance_vec(v_out, v_in, r_p, r_ap, beta_p, beta_n, vtp, vtn, vdd, vss):
    # the same relations as out_node_balance, written with array masks for the scan
    v_gate = (v_in * r_ap + v_out * r_p) / (r_p + r_ap)
    i_res = (v_in - v_out) / (r_p + r_ap)

    def law(v_ov, v_ds, beta):
        lin = beta * (v_ov * v_ds - 0.5 * v_ds * v_ds)
        sat = 0.5 * beta * v_ov * v_ov
        return np.where(v_ov <= 0, 0.0, np.where(v_ds < v_ov, lin, sat))

    return (i_res + law(vdd - v_gate - abs(vtp), vdd - v_out, beta_p)
            - law(v_gate - vss - vtn, v_out - vss, beta_n))


def naive_matmul(x, w):
    rows, cols = len(w), len(w[0])
    out = []
    for sample in x:
        line = []
        for j in range(cols):
            acc = 0.0
            for i in range(rows):
                acc += sample[i] * w[i][j]
            line.append(acc)
        out.append(line)
    return np.array(out)


def mna_divider(v_inputs, g):
    """Column node voltages for inputs driving floating column lines through ``g`` (rows x cols).

    Unknowns: the input-node voltages, the column voltages and the input
    source currents; each input is an ideal voltage source to ground.
    """
    rows, cols = g.shape
    n = rows + cols                       # nodes: inputs first, then columns
    size = n + rows
    a = np.zeros((size, size))
    z = np.zeros(size)
    for i in range(rows):
        for j in range(cols):
            _stamp(a, i, rows + j, g[i, j])
    for i in range(rows):                 # voltage source stamps
        a[i, n + i] = a[n + i, i] = 1.0
        z[n + i] = v_inputs[i]
    return np.linalg.solve(a, z)[rows:n]


def mna_differential(v_inputs, g_pos, g_neg, r_sense):
    """r_sense * (I+ - I-), with both column lines held at 0 V by ideal sources."""
    rows, cols = g_pos.shape
    n = rows + 2 * cols                   # inputs, positive lines, negative lines
    n_src = rows + 2 * cols
    a = np.zeros((n + n_src, n + n_src))
    z = np.zeros(n + n_src)
    for i in range(rows):
        for j in range(cols):
            _stamp(a, i, rows + j, g_pos[i, j])
            _stamp(a, i, rows + cols + j, g_neg[i, j])
    for k in range(n_src):
        a[k, n + k] = a[n + k, k] = 1.0
        z[n + k] = v_inputs[k] if k < rows else 0.0
    x = np.linalg.solve(a, z)
    # KCL at a held line: sum g (v_line - v_in) + I = 0, so I is the current
    # the line sinks into its source
    sunk = x[n + rows:]
    return r_sense * (sunk[:cols] - sunk[cols:])


def _stamp(a, p, q, g):
    a[p, p] += g
    a[q, q] += g
    a[p, q] -= g
    a[q, p] -= g
