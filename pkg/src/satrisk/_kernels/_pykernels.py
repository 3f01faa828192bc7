"""Pure numpy implementations of the hot loops.

Each function mirrors its counterpart in ``_ckernels.pyx`` operation for
operation, so both backends return bit-identical floats.
"""
import numpy as np


def walk_returns(start_cum, row_ptr, cum, next_state, reward, gamma, uniforms):
    """Discounted returns of ``M`` trajectories, one per row of ``uniforms``.

    ``uniforms[:, 0]`` picks the start state, ``uniforms[:, t]`` the t-th
    transition; the outcome chosen is the first one whose cumulative
    probability exceeds the uniform.
    """
    M, n_draws = uniforms.shape
    widths = np.diff(row_ptr)
    width = int(widths.max())
    n_states = len(row_ptr) - 1
    padded = np.full((n_states, width), np.inf)
    for s in range(n_states):
        padded[s, : widths[s]] = cum[row_ptr[s] : row_ptr[s + 1]]

    state = (uniforms[:, 0, None] >= start_cum[None, :]).sum(axis=1)
    np.minimum(state, n_states - 1, out=state)
    phi = np.zeros(M)
    disc = 1.0
    for t in range(1, n_draws):
        k = (uniforms[:, t, None] >= padded[state]).sum(axis=1)
        np.minimum(k, widths[state] - 1, out=k)
        o = row_ptr[state] + k
        phi += disc * reward[o]
        disc *= gamma
        state = next_state[o]
    return phi


def first_isotopic_pair(P, reward, tol):
    """Lexicographically first ``(i, j)``, ``i < j``, of isotopic states, or ``(-1, -1)``."""
    n = len(reward)
    for i in range(n - 1):
        cands = np.flatnonzero(reward[i + 1 :] == reward[i]) + i + 1
        if len(cands) == 0:
            continue
        D = np.abs(P[cands] - P[i])
        D[:, i] = 0.0
        D[np.arange(len(cands)), cands] = 0.0
        hit = np.flatnonzero(D.max(axis=1) <= tol)
        if len(hit):
            return i, int(cands[hit[0]])
    return -1, -1
