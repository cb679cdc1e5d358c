"""Reference (pure numpy) implementations of the hot loops.

Signatures mirror ``_ckernels``; arrays arrive C-contiguous complex128.
"""
import numpy as np


def march_affine(ts, A_s, c_s, x0):
    """Classical RK4 for x' = A(t) x + c(t).

    ``A_s[i]`` / ``c_s[i]`` hold the coefficients at t_i, the midpoint and
    t_{i+1} of step i.
    """
    nsteps = ts.shape[0] - 1
    xs = np.empty((nsteps + 1, x0.shape[0]), dtype=complex)
    x = x0.copy()
    xs[0] = x
    for i in range(nsteps):
        h = ts[i + 1] - ts[i]
        a0, am, a1 = A_s[i]
        c0, cm, c1 = c_s[i]
        k1 = a0 @ x + c0
        k2 = am @ (x + 0.5 * h * k1) + cm
        k3 = am @ (x + 0.5 * h * k2) + cm
        k4 = a1 @ (x + h * k3) + c1
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        xs[i + 1] = x
    return xs


def panel_moments(Xr, w, v):
    """sum_p w[l,i,p] Xr[l,i,p] @ v[l,i,p] -> (L, m, N)."""
    return np.einsum("lip,lipab,lipb->lia", w, Xr, v)


def green_assemble(muP, muQ, H, Hinv, Zf, Zb, Xb, exact):
    """Green-operator integral at every sample of every interval.

    Forward node sums S_k = sum_{j<k} Z(t_k, t_{j+1}) mP_j and backward sums
    T_k = sum_{j>k} Z(t_{k+1}, t_{j+1}) mQ_j are accumulated by recursion;
    the current interval uses prefix sums of the panel moments.
    """
    cumP, cumQ, S, T = sweeps(muP, muQ, H, Hinv)
    m = muP.shape[1]
    totQ = cumQ[:, m]
    out = np.einsum("liab,lb->lia", Zf, S)
    if exact:
        out += np.einsum("liab,lib->lia", Xb, cumP + cumQ)
        out -= np.einsum("liab,lb->lia", Zb, T + totQ)
    else:
        out += np.einsum("liab,lib->lia", Xb, cumP)
        out -= np.einsum("liab,lib->lia", Zb, T[:, None, :] + totQ[:, None, :] - cumQ)
    return out


def sweeps(muP, muQ, H, Hinv):
    """Prefix sums of panel moments plus the node recursions S and T."""
    L, m, N = muP.shape
    cumP = np.zeros((L, m + 1, N), dtype=complex)
    cumQ = np.zeros((L, m + 1, N), dtype=complex)
    np.cumsum(muP, axis=1, out=cumP[:, 1:])
    np.cumsum(muQ, axis=1, out=cumQ[:, 1:])
    S = np.zeros((L, N), dtype=complex)
    for k in range(1, L):
        S[k] = H[k - 1] @ S[k - 1] + cumP[k - 1, m]
    T = np.zeros((L, N), dtype=complex)
    for k in range(L - 2, -1, -1):
        T[k] = Hinv[k + 1] @ (cumQ[k + 1, m] + T[k + 1])
    return cumP, cumQ, S, T
