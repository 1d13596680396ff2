"""
Spectral graph operators on sparse adjacency matrices.

normalized Laplacian, Chebyshev convolution (forward and gradient), heavy-edge
matching coarsening with even padding, upsampling along parent maps, top-k
graph pooling / unpooling and multi-view feature concatenation.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, ValidationError

LAMBDA_FALLBACK = 2.0
POWER_ITERS = 200
POWER_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class GraphLaplacian:
    L: sp.csr_matrix
    lambda_max: float

    @property
    def n(self):
        return self.L.shape[0]

    def scaled(self):
        """2 L / lambda_max - I, with lambda_max = 2 when the estimate vanishes."""
        lam = self.lambda_max if self.lambda_max >= 1e-9 else LAMBDA_FALLBACK
        return (2.0 / lam) * self.L - sp.identity(self.n, format="csr")


@dataclass(frozen=True, eq=False)
class ChebFilter:
    theta: np.ndarray   # (S + 1, F_in, F_out)

    def __post_init__(self):
        th = np.array(self.theta, dtype=float)
        if th.ndim != 3:
            raise DomainError("filter coefficients must have shape (S+1, F_in, F_out)")
        if not np.all(np.isfinite(th)):
            raise DomainError("filter coefficients must be finite")
        object.__setattr__(self, "theta", th)

    @property
    def order(self):
        return self.theta.shape[0] - 1


def as_adjacency(A, check=True):
    A = sp.csr_matrix(A, dtype=float)
    if A.shape[0] != A.shape[1]:
        raise DomainError("adjacency must be square")
    if check:
        if abs(A - A.T).max() > 1e-12 if A.nnz else False:
            raise DomainError("adjacency must be symmetric")
        if A.nnz and A.data.min() < 0:
            raise DomainError("adjacency must be nonnegative")
        if np.any(A.diagonal() != 0):
            raise DomainError("adjacency must have a zero diagonal")
    return A


def normalized_laplacian(A, seed=0):
    """L = I - D^-1/2 A D^-1/2; rows and columns of isolated nodes are all zero."""
    A = as_adjacency(A)
    d = np.asarray(A.sum(axis=1)).ravel()
    inv = np.zeros_like(d)
    inv[d > 0] = 1.0 / np.sqrt(d[d > 0])
    Dm = sp.diags(inv)
    L = sp.diags((d > 0).astype(float)) - Dm @ A @ Dm
    L = sp.csr_matrix((L + L.T) * 0.5)
    L.eliminate_zeros()
    return GraphLaplacian(L, estimate_lambda_max(L, seed=seed))


def estimate_lambda_max(L, seed=0, iters=POWER_ITERS, rtol=POWER_RTOL, block=16):
    """
    Largest eigenvalue of a symmetric PSD matrix by seeded block power
    iteration with a Rayleigh-Ritz step; stops after `iters` sweeps or when the
    estimate changes by less than `rtol` relative.
    """
    L = sp.csr_matrix(L)
    n = L.shape[0]
    if n == 0 or L.nnz == 0:
        return 0.0
    k = min(block, n)
    X = np.random.default_rng(seed).standard_normal((n, k))
    X, _ = np.linalg.qr(X)
    lam = 0.0
    for _ in range(iters):
        Y = L @ X
        X, _ = np.linalg.qr(Y)
        T = X.T @ (L @ X)
        w, U = np.linalg.eigh((T + T.T) * 0.5)
        X = X @ U
        new = float(w[-1])
        if abs(new - lam) <= rtol * max(abs(new), 1e-300):
            lam = new
            break
        lam = new
    return max(lam, 0.0)


def _check_shapes(lap, F, flt):
    F = np.asarray(F, dtype=float)
    if F.ndim != 2 or F.shape[0] != lap.n:
        raise DomainError(f"features must have shape ({lap.n}, F_in), got {F.shape}")
    if F.shape[1] != flt.theta.shape[1]:
        raise DomainError("feature width does not match the filter input width")
    return F


def cheb_basis(lap, F, order):
    """[T_0(Ls) F, ..., T_S(Ls) F] by the three-term recurrence."""
    Ls = lap.scaled()
    X = [F]
    if order >= 1:
        X.append(Ls @ F)
    for _ in range(2, order + 1):
        X.append(2.0 * (Ls @ X[-1]) - X[-2])
    return X


def cheb_conv(lap, F, flt):
    """F' = sum_i T_i(Ls) F Theta_i."""
    F = _check_shapes(lap, F, flt)
    X = cheb_basis(lap, F, flt.order)
    return sum(Xi @ th for Xi, th in zip(X, flt.theta))


def cheb_conv_grad(lap, F, flt, upstream):
    """
    Gradients of <cheb_conv(F), upstream> with respect to F and every Theta_i.

    dF comes from the Clenshaw recurrence on G_i = upstream Theta_i^T (Ls is
    symmetric, so T_i(Ls)^T = T_i(Ls)).
    """
    F = _check_shapes(lap, F, flt)
    G = np.asarray(upstream, dtype=float)
    if G.shape != (lap.n, flt.theta.shape[2]):
        raise DomainError(f"upstream must have shape ({lap.n}, {flt.theta.shape[2]})")
    S = flt.order
    X = cheb_basis(lap, F, S)
    dtheta = np.stack([Xi.T @ G for Xi in X])
    Gi = [G @ th.T for th in flt.theta]
    Ls = lap.scaled()
    b1 = np.zeros_like(F)
    b2 = np.zeros_like(F)
    for i in range(S, 0, -1):
        b1, b2 = Gi[i] + 2.0 * (Ls @ b1) - b2, b1
    dF = Gi[0] + Ls @ b1 - b2
    return dF, dtheta


# ---------------------------------------------------------------- coarsening

@dataclass(frozen=True, eq=False)
class CoarseningHierarchy:
    adjacency: tuple    # csr matrices, level 0 (finest) .. L, padded sizes
    parents: tuple      # int arrays, parents[l][fine node] = coarse node at l + 1
    fake: tuple         # bool arrays per level, True for padding nodes

    @property
    def levels(self):
        return len(self.parents)

    def sizes(self):
        return [A.shape[0] for A in self.adjacency]

    def real_counts(self):
        return [int((~f).sum()) for f in self.fake]

    def __eq__(self, other):
        if not isinstance(other, CoarseningHierarchy) or self.levels != other.levels:
            return False
        for a, b in zip(self.adjacency, other.adjacency):
            if a.shape != b.shape or (a != b).nnz:
                return False
        return all(np.array_equal(a, b) for a, b in zip(self.parents, other.parents)) and \
            all(np.array_equal(a, b) for a, b in zip(self.fake, other.fake))

    __hash__ = None


def heavy_edge_matching(A, real, rng):
    """
    One greedy matching pass. Real nodes are visited in a seeded random order;
    an unmatched node pairs with the unmatched real neighbour maximising
    w_uv (1/d_u + 1/d_v), ties going to the smaller index.
    Returns the list of clusters (tuples of 1 or 2 node ids) in visit order.
    """
    A = sp.csr_matrix(A)
    deg = np.asarray(A.sum(axis=1)).ravel()
    matched = np.zeros(A.shape[0], dtype=bool)
    clusters = []
    for u in rng.permutation(np.flatnonzero(real)):
        if matched[u]:
            continue
        matched[u] = True
        lo, hi = A.indptr[u], A.indptr[u + 1]
        best, best_score = -1, -np.inf
        for v, w in sorted(zip(A.indices[lo:hi], A.data[lo:hi])):
            if matched[v] or not real[v] or w <= 0:
                continue
            score = w * (1.0 / deg[u] + 1.0 / deg[v])
            if score > best_score:
                best, best_score = v, score
        if best >= 0:
            matched[best] = True
            clusters.append((int(u), int(best)))
        else:
            clusters.append((int(u),))
    return clusters


def augment_matching(A, clusters, real):
    """
    Re-pair singletons along alternating paths (greedy matching leaves a few
    percent unmatched, which breaks the halving bound). Each augmentation grows
    the matching by one pair; paths come from a BFS over the alternating tree
    without blossom contraction, so an augmenting path may occasionally be
    missed. Returns clusters in a deterministic order.
    """
    A = sp.csr_matrix(A)
    mate = np.full(A.shape[0], -1, dtype=np.int64)
    for c in clusters:
        if len(c) == 2:
            mate[c[0]], mate[c[1]] = c[1], c[0]
    singles = [c[0] for c in clusters if len(c) == 1]
    for root in singles:
        if mate[root] >= 0:
            continue
        parent = {root: -1}     # outer vertex -> previous outer vertex
        via = {}                # outer vertex -> inner vertex reached from parent
        queue, head, end = [root], 0, None
        while head < len(queue) and end is None:
            x = queue[head]
            head += 1
            for y in A.indices[A.indptr[x]:A.indptr[x + 1]]:
                if not real[y] or y == root:
                    continue
                if mate[y] < 0:
                    end = (x, int(y))
                    break
                z = int(mate[y])
                if z in parent or y in parent:
                    continue
                parent[z] = x
                via[z] = int(y)
                queue.append(z)
        if end is None:
            continue
        x, y = end
        while True:     # flip the path root .. x - y
            px, vx = parent[x], via.get(x)
            mate[x], mate[y] = y, x
            if px < 0:
                break
            x, y = px, vx
    out, seen = [], set()
    for c in clusters:
        for u in c:
            if u in seen:
                continue
            m = int(mate[u])
            if m >= 0:
                out.append((u, m) if u < m else (m, u))
                seen.update((u, m))
            else:
                out.append((u,))
                seen.add(u)
    return out


def coarsen(A, levels=3, seed=0):
    """Heavy-edge matching hierarchy; every level is padded to an even size."""
    A = as_adjacency(A)
    n = A.shape[0]
    fake = np.zeros(n + n % 2, dtype=bool)
    fake[n:] = True
    if n % 2:
        A = sp.csr_matrix(sp.block_diag([A, sp.csr_matrix((1, 1))]))
    rng = np.random.default_rng(seed)
    adj, parents, fakes = [A], [], [fake]
    for _ in range(levels):
        clusters = augment_matching(A, heavy_edge_matching(A, ~fake, rng), ~fake)
        n_real = len(clusters)
        fine_fake = np.flatnonzero(fake)
        # fake fine nodes pair up under fake coarse nodes
        n_coarse_fake_min = (len(fine_fake) + 1) // 2
        n_coarse = n_real + n_coarse_fake_min
        n_coarse += n_coarse % 2
        parent = np.full(A.shape[0], -1, dtype=np.int64)
        for c, members in enumerate(clusters):
            parent[list(members)] = c
        for k, f in enumerate(fine_fake):
            parent[f] = n_real + k // 2
        P = sp.csr_matrix((np.ones(A.shape[0]), (np.arange(A.shape[0]), parent)),
                          shape=(A.shape[0], n_coarse))
        # mirror the strict upper triangle so the result is exactly symmetric
        Ac = sp.triu(P.T @ A @ P, k=1)
        Ac = sp.csr_matrix(Ac + Ac.T)
        Ac.eliminate_zeros()
        Ac.sort_indices()
        fake = np.zeros(n_coarse, dtype=bool)
        fake[n_real:] = True
        adj.append(Ac)
        parents.append(parent)
        fakes.append(fake)
        A = Ac
    return CoarseningHierarchy(tuple(adj), tuple(parents), tuple(fakes))


def hierarchy_problems(h):
    """Invariant violations of a hierarchy as a list of messages (empty = valid)."""
    out = []
    if not (len(h.adjacency) == len(h.fake) == h.levels + 1):
        return ["level count mismatch between adjacency, parent and fake arrays"]
    for l, (A, f) in enumerate(zip(h.adjacency, h.fake)):
        if A.shape != (len(f), len(f)):
            out.append(f"level {l}: adjacency size {A.shape} does not match {len(f)} nodes")
        if len(f) % 2:
            out.append(f"level {l}: odd node count {len(f)}")
        if A.nnz and abs(A - A.T).max() > 0:
            out.append(f"level {l}: adjacency not symmetric")
    for l, p in enumerate(h.parents):
        n_fine, n_coarse = len(h.fake[l]), len(h.fake[l + 1])
        if len(p) != n_fine:
            out.append(f"level {l}: parent map has {len(p)} entries for {n_fine} nodes")
            continue
        if np.any(p < 0) or np.any(p >= n_coarse):
            out.append(f"level {l}: parent map has entries outside 0..{n_coarse - 1}")
            continue
        counts = np.bincount(p, minlength=n_coarse)
        real_c = ~h.fake[l + 1]
        if np.any(counts[real_c] < 1) or np.any(counts > 2):
            out.append(f"level {l}: coarse nodes must have 1 or 2 children")
        if np.any(h.fake[l + 1][p[~h.fake[l]]]):
            out.append(f"level {l}: real node mapped to a fake parent")
        if np.any(~h.fake[l + 1][p[h.fake[l]]]):
            out.append(f"level {l}: fake node mapped to a real parent")
        n_real, n_real_c = int((~h.fake[l]).sum()), int(real_c.sum())
        if not (n_real + 1) // 2 <= n_real_c <= n_real:
            out.append(f"level {l}: {n_real_c} real coarse nodes for {n_real} real fine nodes")
    return out


def halving_ok(h, slack=1):
    """Real-node count halves per level within +/- slack of ceil(n / 2)."""
    r = h.real_counts()
    return all(abs(r[l + 1] - (r[l] + 1) // 2) <= slack for l in range(h.levels))


def upsample(Fc, h, level):
    """Copy coarse features (level + 1) down to level `level`; fake nodes get zeros."""
    if not 0 <= level < h.levels:
        raise DomainError(f"level {level} out of range 0..{h.levels - 1}")
    Fc = np.asarray(Fc, dtype=float)
    if Fc.shape[0] != len(h.fake[level + 1]):
        raise DomainError("coarse feature rows do not match the coarse level size")
    out = Fc[h.parents[level]].copy()
    out[h.fake[level]] = 0.0
    return out


def pool_mean(F, h, level):
    """Average the real children of every coarse node (fake parents get zeros)."""
    F = np.asarray(F, dtype=float)
    p = h.parents[level]
    real = ~h.fake[level]
    n_coarse = len(h.fake[level + 1])
    out = np.zeros((n_coarse,) + F.shape[1:])
    np.add.at(out, p[real], F[real])
    cnt = np.bincount(p[real], minlength=n_coarse).astype(float)
    cnt[cnt == 0] = 1.0
    return out / cnt.reshape((-1,) + (1,) * (F.ndim - 1))


# ------------------------------------------------------------- graph U-Net

def _sigmoid(x):
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def gpool(F, A, k, p):
    """Top-k pooling: scores y = F p / |p|, keep the k best (ties to the smaller index), gate by sigmoid(y)."""
    F = np.asarray(F, dtype=float)
    p = np.asarray(p, dtype=float)
    N = F.shape[0]
    if not 1 <= k <= N:
        raise DomainError(f"k must lie in 1..{N}")
    norm = np.linalg.norm(p)
    if not norm > 0:
        raise DomainError("projection vector must be nonzero")
    y = F @ p / norm
    idx = np.argsort(-y, kind="stable")[:k]
    Fk = F[idx] * _sigmoid(y[idx])[:, None]
    A = sp.csr_matrix(A)
    return Fk, idx, A[idx][:, idx]


def gunpool(Fk, idx, N):
    idx = np.asarray(idx, dtype=np.int64)
    if len(np.unique(idx)) != len(idx):
        raise DomainError("duplicate indices")
    if len(idx) and (idx.min() < 0 or idx.max() >= N):
        raise DomainError("index out of range")
    Fk = np.asarray(Fk, dtype=float)
    out = np.zeros((N,) + Fk.shape[1:])
    out[idx] = Fk
    return out


def concat_views(predictions):
    """(V, 21, 3) -> (21, 3V); node j's row is its (x, y, z) from each view in order."""
    P = np.asarray(predictions, dtype=float)
    if P.ndim != 3 or P.shape[1] != 21 or P.shape[2] != 3:
        raise DomainError(f"predictions must have shape (V, 21, 3), got {P.shape}")
    return P.transpose(1, 0, 2).reshape(21, -1)


def validate_hierarchy(h):
    probs = hierarchy_problems(h)
    if probs:
        raise ValidationError("; ".join(probs))
    return h
