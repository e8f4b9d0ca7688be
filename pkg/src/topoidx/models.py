"""Canonical gapped lattice models, with symmetry-preserving disorder.

Each builder produces a dense truncated-lattice Hamiltonian (open
boundary: the matrix simply stops at the ball edge) whose symmetry
residuals for its target class are exactly zero by construction, with
or without disorder.  Disorder enters through the channel the class
permits: on-site potentials for class A, hopping amplitudes for the
chiral chains, mass/pairing terms for the particle-hole classes.  All
randomness is drawn from ``numpy.random.default_rng(seed)``, so a seed
determines the matrix bit for bit.

Momentum-space oracles live here too: they evaluate the Bloch symbol of
the same bond structure on a periodic grid and integrate the Berry
curvature (plaquette field strengths) or the winding density.  These
never touch the truncated matrices, so they provide independent
reference values for the real-space index estimators.  The overall
orientation of the Berry-curvature oracle is pinned by the calibration
value chern(qwz, m=1) = -1.
"""

import json
import warnings

import numpy as np

from .errors import GapClosedWarning, GridTooCoarse
from .operators import OperatorMatrix, TAU_GAP, spectral_gap

__all__ = [
    'ssh', 'qwz', 'kitaev_chain', 'dirac_lattice_3d',
    'half_plane_projection', 'momentum_oracle', 'OracleReport',
    'ModelSpec', 'build_model', 'MODEL_INFO',
    ]

_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
_SZ = np.array([[1, 0], [0, -1]], dtype=complex)

MODEL_INFO = {
    'ssh': {'d': 1, 'fiber': 2, 'class': 'AIII',
            'params': ('t1', 't2')},
    'qwz': {'d': 2, 'fiber': 2, 'class': 'A', 'params': ('m',)},
    'kitaev': {'d': 1, 'fiber': 2, 'class': 'D',
               'params': ('mu', 't', 'delta')},
    'dirac3d': {'d': 3, 'fiber': 4, 'class': 'AIII', 'params': ('m',)},
    }


def _require(lattice, d, N):
    if lattice.d != d:
        raise ValueError('this model lives in d={}, lattice has '
                         'd={}'.format(d, lattice.d))
    if lattice.N != N:
        raise ValueError('this model needs fiber N={}, lattice has '
                         'N={}'.format(N, lattice.N))


def _warn_if_gapless(H):
    report = spectral_gap(H)
    if report.gap < TAU_GAP:
        warnings.warn('spectral gap {:.2e} below tolerance {:.0e}'
                      .format(report.gap, TAU_GAP), GapClosedWarning,
                      stacklevel=3)
    return H


def _bond(H, lattice, N, x, y, block):
    """Add block |y><x| + h.c. when both sites are on the lattice."""
    xi = lattice.index.get(tuple(int(c) for c in x))
    yi = lattice.index.get(tuple(int(c) for c in y))
    if xi is None or yi is None:
        return
    H[yi * N:(yi + 1) * N, xi * N:(xi + 1) * N] += block
    H[xi * N:(xi + 1) * N, yi * N:(yi + 1) * N] += block.conj().T


def ssh(lattice, t1, t2, W=0.0, seed=0):
    """Alternating-hopping two-band chain (chiral class).

    Fiber order per site is (A, B) = (positive, negative chirality).
    t1 couples A and B on a site, t2 couples B at x to A at x+1, so the
    off-diagonal block has Bloch symbol t1 + t2 exp(ik).  Hopping
    disorder W keeps both couplings real and off-diagonal, hence the
    grading anticommutes exactly for every realization.
    """
    _require(lattice, 1, 2)
    n = lattice.nsites
    rng = np.random.default_rng(seed)
    on = np.full(n, float(t1))
    out = np.full(n, float(t2))
    if W != 0.0:
        on = on + rng.uniform(-W, W, size=n)
        out = out + rng.uniform(-W, W, size=n)
    H = np.zeros((2 * n, 2 * n), dtype=complex)
    for i, x in enumerate(lattice.sites):
        H[2 * i + 1, 2 * i] = on[i]
        H[2 * i, 2 * i + 1] = on[i]
        # bond from B at x into A at x+1
        j = lattice.index.get((int(x[0]) + 1,))
        if j is not None:
            H[2 * j, 2 * i + 1] = out[i]
            H[2 * i + 1, 2 * j] = out[i]
    return _warn_if_gapless(OperatorMatrix(H, lattice=lattice))


def qwz(lattice, m, W=0.0, seed=0):
    """Two-band Chern insulator on the square lattice (no symmetry).

    Bond blocks (sigma_z + i sigma_x)/2 along e1 and
    (sigma_z + i sigma_y)/2 along e2 with on-site mass m sigma_z give
    the Bloch symbol sin k1 sigma_x + sin k2 sigma_y +
    (m + cos k1 + cos k2) sigma_z.  Disorder is a random on-site
    diagonal, the class A channel.
    """
    _require(lattice, 2, 2)
    n = lattice.nsites
    T1 = (_SZ + 1j * _SX) / 2
    T2 = (_SZ + 1j * _SY) / 2
    H = np.zeros((2 * n, 2 * n), dtype=complex)
    for x in lattice.sites:
        _bond(H, lattice, 2, x, (int(x[0]) + 1, int(x[1])), T1)
        _bond(H, lattice, 2, x, (int(x[0]), int(x[1]) + 1), T2)
    onsite = np.tile(np.diagonal(float(m) * _SZ).real, n)
    if W != 0.0:
        rng = np.random.default_rng(seed)
        onsite = onsite + rng.uniform(-W, W, size=2 * n)
    H[np.arange(2 * n), np.arange(2 * n)] += onsite
    return _warn_if_gapless(OperatorMatrix(H, lattice=lattice))


def kitaev_chain(lattice, mu, t, delta, W=0.0, seed=0):
    """Single-channel p-wave chain in its Majorana basis (class D).

    With two Majorana modes (a, b) per site the matrix is i times a
    real antisymmetric A, so conj(H) = -H exactly: the particle-hole
    constraint with plain conjugation holds for every realization.
    Disorder shakes the chemical potential and the pairing, both of
    which stay inside the real antisymmetric channel.

    At mu=0, t=delta the chain decouples into bonds and leaves one
    exact Majorana zero mode at each open end.
    """
    _require(lattice, 1, 2)
    n = lattice.nsites
    rng = np.random.default_rng(seed)
    mus = np.full(n, float(mu))
    deltas = np.full(n, float(delta))
    if W != 0.0:
        mus = mus + rng.uniform(-W, W, size=n)
        deltas = deltas + rng.uniform(-W, W, size=n)
    A = np.zeros((2 * n, 2 * n))
    for i, x in enumerate(lattice.sites):
        A[2 * i, 2 * i + 1] += -mus[i]
        j = lattice.index.get((int(x[0]) + 1,))
        if j is not None:
            A[2 * i, 2 * j + 1] += deltas[i] - t
            A[2 * j, 2 * i + 1] += -(deltas[i] + t)
    A = A - A.T  # each oriented entry was written once; antisymmetrize
    H = 1j * A
    return _warn_if_gapless(OperatorMatrix(H, lattice=lattice))


def dirac_lattice_3d(lattice, m, W=0.0, seed=0):
    """Four-band Wilson-type operator in d=3 (chiral class).

    Bond block along +e_j is (i sigma_x x sigma_j + sigma_y x 1)/2 and
    the on-site term is m sigma_y x 1, giving the Bloch symbol
    sum_j sin k_j (sigma_x x sigma_j) + (m + sum_j cos k_j)
    (sigma_y x 1).  Everything anticommutes with sigma_z x 1, and the
    disorder channel is the on-site mass, which does too.
    """
    _require(lattice, 3, 4)
    n = lattice.nsites
    paulis = [_SX, _SY, _SZ]
    B = np.kron(_SY, np.eye(2))
    H = np.zeros((4 * n, 4 * n), dtype=complex)
    for x in lattice.sites:
        for j in range(3):
            step = list(int(c) for c in x)
            step[j] += 1
            block = (1j * np.kron(_SX, paulis[j]) + B) / 2
            _bond(H, lattice, 4, x, step, block)
    masses = np.full(n, float(m))
    if W != 0.0:
        rng = np.random.default_rng(seed)
        masses = masses + rng.uniform(-W, W, size=n)
    for i in range(n):
        H[4 * i:4 * i + 4, 4 * i:4 * i + 4] += masses[i] * B
    return _warn_if_gapless(OperatorMatrix(H, lattice=lattice))


def half_plane_projection(lattice):
    """The two directional half-plane projections in d=2.

    P1 multiplies by the indicator of direction component omega_1 > 0
    (the origin counts as direction e1, so it lands in P1), P2 by that
    of omega_1 < 0; sites with omega_1 = 0 belong to neither.  Both are
    diagonal, so they commute exactly with the position phases.
    """
    if lattice.d != 2:
        raise ValueError('half-plane projections are a d=2 construction')
    P1 = lattice.site_projection(lattice.directions[:, 0] > 0)
    P2 = lattice.site_projection(lattice.directions[:, 0] < 0)
    return (OperatorMatrix(P1, lattice=lattice),
            OperatorMatrix(P2, lattice=lattice))


class OracleReport:
    """Integer invariant from a momentum-space computation."""

    def __init__(self, model, value, raw, n_k):
        self.model = model
        self.value = int(value)
        self.raw = float(raw)
        self.residual = abs(self.raw - self.value)
        self.n_k = int(n_k)

    def __repr__(self):
        return ('OracleReport({}, value={}, raw={:+.6f}, n_k={})'
                .format(self.model, self.value, self.raw, self.n_k))


def _winding_1d(symbol, n_k):
    """Winding of a nonvanishing scalar symbol via phase increments."""
    k = 2 * np.pi * np.arange(n_k + 1) / n_k
    q = symbol(k)
    steps = np.angle(q[1:] / q[:-1])
    return steps.sum() / (2 * np.pi)


def _chern_fhs(bloch, n_k):
    """Plaquette Berry-flux sum of the lower band on an n_k^2 grid.

    Plaquettes are circulated in the orientation that puts the
    calibration point chern(qwz, m=1) at -1; the total is an integer up
    to roundoff by construction.
    """
    k = 2 * np.pi * np.arange(n_k) / n_k
    k1, k2 = np.meshgrid(k, k, indexing='ij')
    Hk = bloch(k1[..., None, None], k2[..., None, None])
    _, vecs = np.linalg.eigh(Hk)
    u = vecs[..., :, 0]
    link1 = np.einsum('abi,abi->ab', u.conj(), np.roll(u, -1, axis=0))
    link2 = np.einsum('abi,abi->ab', u.conj(), np.roll(u, -1, axis=1))
    flux = np.angle(link2 * np.roll(link1, -1, axis=1) *
                    np.roll(link2, -1, axis=0).conj() * link1.conj())
    return flux.sum() / (2 * np.pi)


def _winding_3d(m, n_k):
    """Degree-type winding of the off-diagonal Bloch block in d=3.

    Uses the analytic k-derivatives of the symbol, so the Riemann sum
    converges spectrally fast in n_k.  The orientation (the overall
    sign of the permutation sum) is pinned so that this oracle agrees
    with the real-space odd pairing, whose own sign is calibrated once
    in d=1; with it the mass windows (-3,-1) and (1,3) carry +1 and
    (-1,1) carries -2.
    """
    k = 2 * np.pi * np.arange(n_k) / n_k
    ks = np.meshgrid(k, k, k, indexing='ij')
    paulis = [_SX, _SY, _SZ]
    shape = ks[0].shape + (2, 2)
    U = np.zeros(shape, dtype=complex)
    mass = m + sum(np.cos(kj) for kj in ks)
    for j in range(3):
        U += np.sin(ks[j])[..., None, None] * paulis[j]
    U += 1j * mass[..., None, None] * np.eye(2)
    Uinv = np.linalg.inv(U)
    g = []
    for j in range(3):
        dU = np.cos(ks[j])[..., None, None] * paulis[j] \
            - 1j * np.sin(ks[j])[..., None, None] * np.eye(2)
        g.append(Uinv @ dU)
    total = 0.0
    for (a, b, c, sign) in [(0, 1, 2, -1), (1, 2, 0, -1), (2, 0, 1, -1),
                            (0, 2, 1, 1), (2, 1, 0, 1), (1, 0, 2, 1)]:
        tr = np.einsum('...ij,...jk,...ki->...', g[a], g[b], g[c])
        total += sign * tr.sum()
    cell = (2 * np.pi / n_k) ** 3
    return (total * cell / (24 * np.pi ** 2)).real


def momentum_oracle(model, params, n_k=64):
    """Translation-invariant reference invariant for a model family.

    Evaluates the named model's Bloch symbol on a periodic k-grid and
    returns the rounded invariant with its rounding residual.  Raises
    GridTooCoarse when the residual exceeds 0.1.
    """
    if model == 'ssh':
        t1, t2 = float(params['t1']), float(params['t2'])
        raw = _winding_1d(lambda k: t1 + t2 * np.exp(1j * k), n_k)
    elif model == 'qwz':
        m = float(params['m'])

        def bloch(k1, k2):
            return (np.sin(k1) * _SX + np.sin(k2) * _SY +
                    (m + np.cos(k1) + np.cos(k2)) * _SZ)

        raw = _chern_fhs(bloch, n_k)
    elif model == 'dirac3d':
        raw = _winding_3d(float(params['m']), n_k)
    else:
        raise ValueError('no momentum oracle for model {!r}'.format(model))
    report = OracleReport(model, np.rint(raw), raw, n_k)
    if report.residual > 0.1:
        raise GridTooCoarse('oracle residual {:.3f} at n_k={}'
                            .format(report.residual, n_k))
    return report


class ModelSpec:
    """Serializable description of one disordered model realization."""

    def __init__(self, name, params, W=0.0, seed=0):
        if name not in MODEL_INFO:
            raise ValueError('unknown model {!r}; have {}'.format(
                name, sorted(MODEL_INFO)))
        info = MODEL_INFO[name]
        missing = set(info['params']) - set(params)
        if missing:
            raise ValueError('model {} needs parameters {}'.format(
                name, sorted(missing)))
        self.name = name
        self.params = {k: float(params[k]) for k in info['params']}
        self.W = float(W)
        self.seed = int(seed)

    @property
    def d(self):
        return MODEL_INFO[self.name]['d']

    @property
    def fiber(self):
        return MODEL_INFO[self.name]['fiber']

    @property
    def label(self):
        """Target symmetry class label."""
        return MODEL_INFO[self.name]['class']

    def to_json(self):
        return json.dumps({
            'name': self.name, 'params': self.params,
            'disorder': {'amplitude': self.W, 'distribution': 'uniform',
                         'seed': self.seed},
            'class': self.label,
            }, sort_keys=True)

    @classmethod
    def from_json(cls, payload):
        data = json.loads(payload) if isinstance(payload, str) else payload
        dis = data.get('disorder', {})
        return cls(data['name'], data['params'],
                   W=dis.get('amplitude', 0.0), seed=dis.get('seed', 0))

    def __repr__(self):
        return 'ModelSpec({}, {}, W={}, seed={})'.format(
            self.name, self.params, self.W, self.seed)


def build_model(spec, lattice):
    """Construct the model a ModelSpec describes on the given lattice."""
    p = spec.params
    if spec.name == 'ssh':
        return ssh(lattice, p['t1'], p['t2'], W=spec.W, seed=spec.seed)
    if spec.name == 'qwz':
        return qwz(lattice, p['m'], W=spec.W, seed=spec.seed)
    if spec.name == 'kitaev':
        return kitaev_chain(lattice, p['mu'], p['t'], p['delta'],
                            W=spec.W, seed=spec.seed)
    if spec.name == 'dirac3d':
        return dirac_lattice_3d(lattice, p['m'], W=spec.W, seed=spec.seed)
    raise ValueError('unknown model {!r}'.format(spec.name))
