"""Iwasawa and Birkhoff splittings of twisted 2x2 loops.

Iwasawa ``g = F g_plus`` has two numerical routes:

* ``newton``: spectral factorization of the positive symbol W = star(g) g on
  the unit circle by the quadratically convergent Newton iteration
  Q <- (I + Y) Q, with Y + star(Y) = star(Q)^{-1} W Q^{-1} - I, Y a plus-loop.
  Valid whenever the coefficient series of g can be evaluated on S^1.
* ``two_circle``: a linear Riemann-Hilbert solve that only uses samples of g
  on C_r. The unitary factor is the loop on the annulus r <= |lambda| <= 1/r
  with F = g Zin on C_r and F = g^{-H} Zout on C_{1/r}; afterwards F*F is a
  constant positive matrix that is divided out.

``auto`` picks newton when the series has a negligible tail on S^1.
Birkhoff ``g = g_minus g_plus`` is a block-Toeplitz solve for g_minus^{-1}.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import IllConditioned, NoConvergence
from .loops import IDENTITY, LoopMatrix, circle_points, multiply

STEP_TOL = 1e-12
RESIDUAL_TOL = 1e-10
MAX_ITER = 200
BIG_CELL_COND = 1e12


@dataclass(frozen=True)
class IwasawaResult:
    unitary_part: LoopMatrix
    plus_part: LoopMatrix
    residual: float
    method: str = "newton"
    iterations: int = 0
    unitarity: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def F(self) -> LoopMatrix:
        return self.unitary_part

    @property
    def g_plus(self) -> LoopMatrix:
        return self.plus_part


@dataclass(frozen=True)
class BirkhoffResult:
    minus_part: LoopMatrix
    plus_part: LoopMatrix
    residual: float
    in_big_cell: bool
    condition: float = 1.0


def _fft_size(n: int) -> int:
    return 1 << int(np.ceil(np.log2(max(n, 8))))


def _inv2(m: np.ndarray) -> np.ndarray:
    """Batched closed-form inverse of 2x2 matrices."""
    det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    out = np.empty_like(m)
    out[..., 0, 0] = m[..., 1, 1]
    out[..., 1, 1] = m[..., 0, 0]
    out[..., 0, 1] = -m[..., 0, 1]
    out[..., 1, 0] = -m[..., 1, 0]
    return out / det[..., None, None]


def _hermitian(m: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(m, -1, -2))


def _sup_norm(m: np.ndarray) -> float:
    return float(np.max(np.linalg.norm(m, ord=2, axis=(-2, -1))))


def series_valid_on_unit_circle(g: LoopMatrix, rel_tol: float = 1e-13) -> bool:
    """True when the outer quarter of the series is negligible on S^1."""
    if g.r == 1.0:
        return True
    norms = np.linalg.norm(g.data, axis=(1, 2))
    total = norms.sum()
    if total == 0:
        return True
    cut = int(np.ceil(0.75 * g.N))
    tail = norms[np.abs(g.degrees) > cut].sum()
    return bool(tail <= rel_tol * total)


def _normalize_b(F: np.ndarray, gp_coeffs: np.ndarray):
    """Move a constant unitary between the factors so g_plus(0) is in B."""
    q, rmat = np.linalg.qr(gp_coeffs[0])
    phase = np.diag(rmat) / np.abs(np.diag(rmat))
    q = q * phase[None, :]
    return q, _hermitian(q)


# ---------------------------------------------------------------- newton
def _newton_seed(W0: np.ndarray, seed, twisted: bool) -> np.ndarray:
    """Initial plus-loop (Taylor block, degrees 0..1) for the Newton iteration."""
    q0 = np.zeros((2, 2, 2), dtype=complex)
    if seed in (None, 0, "identity"):
        q0[0] = IDENTITY
        return q0
    herm = 0.5 * (W0 + _hermitian(W0))
    chol = np.linalg.cholesky(herm)        # lower L with L L^H = W0
    q0[0] = _hermitian(chol)               # upper R with R^H R = W0
    if seed == "cholesky":
        return q0
    rng = np.random.default_rng(seed if isinstance(seed, (int, np.integer)) else 12345)
    pert = 0.2 * (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))
    if twisted:
        q0[1] = q0[0] @ np.array([[0, pert[0, 1]], [pert[1, 0], 0]])
    else:
        q0[0] = q0[0] @ (IDENTITY + np.triu(pert, 1))
    return q0


def _iwasawa_newton(g: LoopMatrix, seed=None) -> IwasawaResult:
    N = g.N
    M = _fft_size(8 * (N + 1))
    Nq = M // 2 - 1
    G = g.samples(M, radius=1.0)
    W = _hermitian(G) @ G
    if not np.all(np.isfinite(W)):
        raise IllConditioned("loop is not finite on the unit circle")
    eig = np.linalg.eigvalsh(0.5 * (W + _hermitian(W)))
    if eig.min() <= 1e-13 * eig.max():
        raise IllConditioned(f"symbol nearly singular on S^1 (min eigenvalue {eig.min():.2e})")
    W0 = np.mean(W, axis=0)

    qcoef = np.zeros((M, 2, 2), dtype=complex)
    seed_block = _newton_seed(W0, seed, g.twisted)
    qcoef[:2] = seed_block
    Q = np.fft.ifft(qcoef, axis=0) * M

    step = np.inf
    polish = False
    for iteration in range(1, MAX_ITER + 1):
        Qi = _inv2(Q)
        E = _hermitian(Qi) @ W @ Qi - IDENTITY
        if polish:
            break
        # one more (quadratically convergent) step after the defect test passes
        polish = _sup_norm(E) < RESIDUAL_TOL
        Ec = np.fft.fft(E, axis=0) / M
        Yc = np.zeros_like(Ec)
        Yc[1:M // 2] = Ec[1:M // 2]
        Yc[0] = np.triu(Ec[0], 1) + np.diag(0.5 * np.real(np.diag(Ec[0])))
        step = float(np.max(np.abs(Yc)))
        Y = np.fft.ifft(Yc, axis=0) * M
        Qn = (IDENTITY + Y) @ Q
        qc = np.fft.fft(Qn, axis=0) / M
        qc[Nq + 1:] = 0.0
        Q = np.fft.ifft(qc, axis=0) * M
        if step < STEP_TOL:
            break
    else:
        raise NoConvergence(f"Newton spectral factorization stalled (step {step:.2e})")

    qc = np.fft.fft(Q, axis=0) / M
    left, left_h = _normalize_b(None, qc)
    qc = left_h[None] @ qc
    Q = left_h[None] @ Q
    # for a Laurent polynomial of degree d, F has degree <= d and g_plus <= 2d;
    # anything beyond is sample roundoff that C_r would amplify by r^-n
    d = max(abs(g.lo), abs(g.hi), 1)
    Fs = G @ _inv2(Q)
    F = LoopMatrix.from_samples(Fs, g.r, N, g.twisted, radius=1.0, degree_range=(-d, d))
    gp = LoopMatrix.from_samples(np.fft.ifft(qc, axis=0) * M, g.r, N, g.twisted,
                                 radius=1.0, degree_range=(0, min(2 * d, N)))
    return _finish(g, F, gp, "newton", iteration)


# ------------------------------------------------------------ two circle
class TwoCircleSolver:
    """Reusable setup for Iwasawa splittings of loops sampled on C_r.

    The Laurent window of F is [-N, N]; M equally spaced samples on C_r
    are required (M >= 2N + 2).
    """

    def __init__(self, r: float, N: int, M: int | None = None, twisted: bool = True):
        self.r, self.N, self.twisted = float(r), int(N), twisted
        self.M = int(M) if M is not None else 2 * N + 16
        if self.M < 2 * self.N + 2:
            raise ValueError("two-circle solve needs M >= 2N + 2 samples")
        M = self.M
        n = np.arange(-N, N + 1)
        zeta = circle_points(M)
        scale = self.r ** np.abs(n).astype(float)
        # columns: scaled unknown y_n = F_n / r^|n|
        self.n = n
        self.inner_weights = self.r ** n.astype(float) * scale
        self.outer_weights = self.r ** (-n).astype(float) * scale
        self.col_scale = scale
        freq = np.fft.fftfreq(M, d=1.0 / M).astype(int)
        self.neg_modes = np.nonzero(freq < 0)[0]
        self.pos_modes = np.nonzero(freq > 0)[0]
        self.zero_mode = np.nonzero(freq == 0)[0]
        self.lam = self.r * zeta
        freq_in, freq_out = freq[self.neg_modes], freq[np.concatenate([self.zero_mode, self.pos_modes])]
        row_i = np.concatenate([np.repeat([0, 1], len(freq_in)), np.repeat([0, 1], len(freq_out))])
        row_k = np.concatenate([np.tile(freq_in, 2), np.tile(freq_out, 2)])
        col_l = np.repeat([0, 1], len(n))
        col_n = np.tile(n, 2)
        self._row_parity = [(row_i + row_k + j) % 2 == 0 for j in range(2)]
        self._col_parity = [(col_l + col_n + j) % 2 == 0 for j in range(2)]
        self.unit = circle_points(max(64, 2 * N + 2))

    def _block(self, Gm: np.ndarray, weights: np.ndarray, modes: np.ndarray) -> np.ndarray:
        """Rows (i, k) x columns (l, n) of the map y -> mode k of (Gm F)_i.

        With F_l(lambda_m) = sum_n weights_n zeta_m^n y_{l,n}, the k-th DFT
        mode of Gm[m, i, l] zeta_m^n is the (k - n)-th mode of Gm, so the
        block is a shifted copy of the FFT of the samples.
        """
        Ghat = np.fft.fft(Gm, axis=0) / self.M                       # (M, 2, 2)
        idx = (modes[:, None] - self.n[None, :]) % self.M            # (K, n)
        T = Ghat[idx] * weights[None, :, None, None]                 # (K, n, 2, 2)
        K, nn = idx.shape
        return np.transpose(T, (2, 0, 3, 1)).reshape(2 * K, 2 * nn)

    def solve(self, G: np.ndarray) -> IwasawaResult:
        """Iwasawa split of the loop with samples ``G`` at r * exp(2 pi i m / M)."""
        G = np.asarray(G, dtype=complex)
        Ginv = _inv2(G)
        GH = _hermitian(G)
        rows_in = self._block(Ginv, self.inner_weights, self.neg_modes)
        outer_modes = np.concatenate([self.zero_mode, self.pos_modes])
        rows_out = self._block(GH, self.outer_weights, outer_modes)
        mat = np.vstack([rows_in, rows_out])
        rhs = np.zeros((mat.shape[0], 2), dtype=complex)
        K0 = rows_in.shape[0]
        Kout = len(outer_modes)
        # the zero mode of Zout is the first of the outer modes for each component i
        rhs[K0 + 0 * Kout, 0] = 1.0
        rhs[K0 + 1 * Kout, 1] = 1.0
        if self.twisted:
            # column j of F and of Z only carries entries (i, k) with i + j + k even
            sol = np.zeros((mat.shape[1], 2), dtype=complex)
            for j in range(2):
                rmask = self._row_parity[j]
                cmask = self._col_parity[j]
                sub = mat[np.ix_(rmask, cmask)]
                sol[cmask, j] = scipy.linalg.lstsq(sub, rhs[rmask, j], lapack_driver="gelsy",
                                                   check_finite=False)[0]
        else:
            sol = scipy.linalg.lstsq(mat, rhs, lapack_driver="gelsy", check_finite=False)[0]
        nn = 2 * self.N + 1
        # sol rows ordered (l, n); columns are the two columns j of F
        y = sol.reshape(2, nn, 2)                        # (l, n, j)
        coef = np.transpose(y, (1, 0, 2)) * self.col_scale[:, None, None]  # F_n[l, j]
        if not np.all(np.isfinite(coef)):
            raise IllConditioned("two-circle system produced non-finite coefficients")
        F = LoopMatrix.from_array(-self.N, coef, self.r, self.N, self.twisted, clean_twist=self.twisted)
        Fu = F(self.unit)
        gram = _hermitian(Fu) @ Fu
        gram_mean = np.mean(gram, axis=0)
        spread = _sup_norm(gram - gram_mean)
        w, v = np.linalg.eigh(0.5 * (gram_mean + _hermitian(gram_mean)))
        if w.min() <= 0:
            raise IllConditioned("frame Gram matrix is not positive definite")
        inv_sqrt = v @ np.diag(w ** -0.5) @ _hermitian(v)
        Fsamp = F.samples(self.M) @ inv_sqrt
        gp_samples = _inv2(Fsamp) @ G
        gp = LoopMatrix.from_samples(gp_samples, self.r, self.N, self.twisted,
                                     degree_range=(0, self.N))
        left, left_h = _normalize_b(None, gp.window(0, 0))
        fcoef = F.data @ (inv_sqrt @ left)[None]
        F = LoopMatrix.from_array(F.lo, fcoef, self.r, self.N, self.twisted, clean_twist=self.twisted)
        gp = LoopMatrix.from_array(0, left_h[None] @ gp.data, self.r, self.N, self.twisted,
                                   gp.truncation_residual, clean_twist=self.twisted)
        Fs = F.samples(self.M)
        residual = _sup_norm(G - Fs @ gp.samples(self.M))
        Fu = F(self.unit)
        unitarity = _sup_norm(_hermitian(Fu) @ Fu - IDENTITY)
        return IwasawaResult(F, gp, residual, "two_circle", 1, unitarity,
                             {"gram_spread": spread / max(w.max(), 1e-300)})


def _iwasawa_two_circle(g: LoopMatrix, M: int | None = None) -> IwasawaResult:
    solver = TwoCircleSolver(g.r, g.N, M, g.twisted)
    res = solver.solve(g.samples(solver.M))
    Gs = g.samples(solver.M)
    residual = _sup_norm(Gs - multiply(res.F, res.g_plus).samples(solver.M))
    return IwasawaResult(res.F, res.g_plus, residual, res.method, 1, res.unitarity, res.diagnostics)


def _finish(g, F, gp, method, iterations) -> IwasawaResult:
    M = _fft_size(4 * (g.N + 1))
    prod = multiply(F, gp)
    residual = _sup_norm(g.samples(M) - prod.samples(M))
    Fu = F.samples(M, radius=1.0)
    unitarity = _sup_norm(_hermitian(Fu) @ Fu - IDENTITY)
    return IwasawaResult(F, gp, residual, method, iterations, unitarity)


def iwasawa(g: LoopMatrix, method: str = "auto", seed=None) -> IwasawaResult:
    """Split g = F g_plus with F unitary on S^1 and g_plus(0) in B.

    ``seed`` selects the Newton starting plus-loop: None/'identity',
    'cholesky', or an integer for a randomly perturbed Cholesky seed.
    """
    if method == "auto":
        method = "newton" if series_valid_on_unit_circle(g) else "two_circle"
    if method == "newton":
        return _iwasawa_newton(g, seed)
    if method == "two_circle":
        return _iwasawa_two_circle(g)
    raise ValueError(f"unknown Iwasawa method {method!r}")


# -------------------------------------------------------------- birkhoff
def birkhoff(g: LoopMatrix, depth: int | None = None) -> BirkhoffResult:
    """Split g = g_minus g_plus with g_minus(infinity) = I.

    Solves for X = g_minus^{-1} = I + X_{-1} lambda^{-1} + ... + X_{-K} lambda^{-K}
    from the vanishing of the negative coefficients of X g (finite section
    of the block-Toeplitz system, in coefficients scaled to C_r).
    """
    K = g.N if depth is None else int(depth)
    r = g.r
    lo_needed = -2 * K - 1
    gh = g.window(min(g.lo, lo_needed), max(g.hi, K))
    base = min(g.lo, lo_needed)
    degrees = np.arange(base, base + gh.shape[0])
    gh = gh * (r ** degrees.astype(float))[:, None, None]

    def ghat(k):
        idx = k - base
        if 0 <= idx < gh.shape[0]:
            return gh[idx]
        return np.zeros((2, 2), dtype=complex)

    # unknown row vectors x_n (n = -K..-1); equation index m = -K..-1
    T = np.zeros((2 * K, 2 * K), dtype=complex)
    rhs = np.zeros((2 * K, 2), dtype=complex)
    for mi, m in enumerate(range(-K, 0)):
        for ni, n in enumerate(range(-K, 0)):
            # (x g)_m[b] = sum_a x_n[a] ghat_{m-n}[a, b]
            T[2 * mi:2 * mi + 2, 2 * ni:2 * ni + 2] = ghat(m - n).T
        rhs[2 * mi:2 * mi + 2, :] = -ghat(m).T          # x_0 = e_i^T contributes ghat_m[i, b]
    cond = float(np.linalg.cond(T)) if K > 0 else 1.0
    in_big_cell = bool(np.isfinite(cond) and cond < BIG_CELL_COND)
    if K > 0:
        sol, *_ = np.linalg.lstsq(T, rhs, rcond=None)
        # sol[2*ni + a, i] = x_n^{(row i)}[a]
        xs = sol.reshape(K, 2, 2)                        # (n, a, i)
        X = np.transpose(xs, (0, 2, 1))                  # X_n[i, a]
        X = X / (r ** np.arange(-K, 0).astype(float))[:, None, None]
        Xdata = np.concatenate([X, IDENTITY[None]], axis=0)
    else:
        Xdata = IDENTITY[None]
    Xloop = LoopMatrix.from_array(-K, Xdata, r, max(g.N, K), g.twisted, clean_twist=g.twisted)
    Mfft = _fft_size(4 * (max(g.N, K) + 1))
    prod = multiply(Xloop, g)
    gp = LoopMatrix.from_array(0, prod.window(0, g.N), r, g.N, g.twisted, clean_twist=g.twisted)
    Xs = Xloop.samples(Mfft)
    gm_samples = _inv2(Xs)
    gm = LoopMatrix.from_samples(gm_samples, r, max(g.N, K), g.twisted, degree_range=(-max(g.N, K), 0))
    detx = np.abs(np.linalg.det(gp.window(0, 0)[0]))
    if not np.isfinite(detx) or detx < 1e-12:
        in_big_cell = False
    residual = _sup_norm(g.samples(Mfft) - gm.samples(Mfft) @ gp.samples(Mfft))
    return BirkhoffResult(gm, gp, residual, in_big_cell, cond)
