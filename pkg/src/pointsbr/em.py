"""Field mathematics for the ray tracer: polarization transport at perfect
conductors, the closed-form radiation integral of one ray-tube footprint,
per-ray scattered-field contributions and monostatic RCS.

All field arrays are complex128 with positions in meters and wave vectors in
rad/m.  Scattered fields are far-field quantities with the 1/r spherical
spreading already factored out, so sigma = 4*pi*|Es|^2/E0^2 directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidFieldError
from .validation import as_unit3, as_vec3, normalized

C0 = 299792458.0          # m/s
ETA0 = 376.730313668      # ohm
RCS_FLOOR_DBSM = -300.0

# reflection coefficients of a perfect electric conductor
GAMMA_PARALLEL = 1.0
GAMMA_PERP = -1.0


def sinc(x):
    """Unnormalized sin(x)/x, 1 at x=0. Accepts scalars or arrays."""
    x = np.asarray(x, dtype=np.float64)
    out = np.ones_like(x)
    nz = np.abs(x) > 1e-300
    out[nz] = np.sin(x[nz]) / x[nz]
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class PlaneWave:
    """Far-field plane-wave excitation.

    propagation: unit vector the wave travels along.
    e_pol: unit electric polarization, perpendicular to propagation.
    """

    frequency: float
    propagation: np.ndarray
    e_pol: np.ndarray
    amplitude: float = 1.0
    phase0: float = 0.0

    def __post_init__(self):
        if not self.frequency > 0:
            raise InvalidFieldError("frequency must be positive")
        if not self.amplitude > 0:
            raise InvalidFieldError("amplitude must be positive")
        k = as_unit3(self.propagation, "propagation")
        e = as_unit3(self.e_pol, "e_pol")
        if abs(float(np.dot(k, e))) > 1e-9:
            raise InvalidFieldError("e_pol must be perpendicular to propagation")
        object.__setattr__(self, "propagation", k)
        object.__setattr__(self, "e_pol", e)
        k.setflags(write=False)
        e.setflags(write=False)

    @property
    def wavelength(self) -> float:
        return C0 / self.frequency

    @property
    def k0(self) -> float:
        return 2.0 * math.pi * self.frequency / C0

    @property
    def wave_vector(self) -> np.ndarray:
        return self.k0 * self.propagation

    @property
    def h_pol(self) -> np.ndarray:
        """Unit magnetic polarization, propagation x e_pol."""
        return np.cross(self.propagation, self.e_pol)


@dataclass(frozen=True)
class PolBasis:
    """Perpendicular/parallel decomposition frame at one reflection."""

    e_v: np.ndarray     # perpendicular to the plane of incidence
    e_p_in: np.ndarray  # parallel, incident side
    e_p_out: np.ndarray # parallel, reflected side


def pol_basis(k_i, k_r, n) -> PolBasis:
    """Polarization frame for a reflection with incident direction k_i,
    reflected direction k_r and surface normal n (all unit).

    e_v = normalized(k_i x n); e_p_in = e_v x k_i; e_p_out = e_v x k_r.
    Near normal incidence (|k_i x n| < 1e-9) any transverse e_v works
    physically; we pick a deterministic one from a fixed helper axis.
    """
    k_i = np.asarray(k_i, dtype=np.float64)
    k_r = np.asarray(k_r, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    cross = np.cross(k_i, n)
    mag = np.linalg.norm(cross)
    if mag < 1e-9:
        helper = np.array([1.0, 0.0, 0.0])
        if abs(k_i[0]) > 0.9:
            helper = np.array([0.0, 1.0, 0.0])
        e_v = normalized(np.cross(k_i, helper))
    else:
        e_v = cross / mag
    e_p_in = normalized(np.cross(e_v, k_i))
    e_p_out = normalized(np.cross(e_v, k_r))
    return PolBasis(e_v, e_p_in, e_p_out)


def reflect_field(e_inc, k_i, k_r, n):
    """Complex incident E-vector -> reflected E-vector at a perfect conductor.

    The field is decomposed into its (parallel, perpendicular) pair, the
    scalar reflection coefficients applied, and the pair recomposed on the
    reflected-side frame. Raises InvalidFieldError when e_inc is not
    transverse to k_i beyond 1e-6 relative.
    """
    e_inc = np.asarray(e_inc, dtype=np.complex128)
    k_i = np.asarray(k_i, dtype=np.float64)
    scale = np.linalg.norm(e_inc)
    if scale > 0.0 and abs(complex(e_inc @ k_i)) > 1e-6 * scale:
        raise InvalidFieldError("incident field is not transverse to the ray")
    basis = pol_basis(k_i, k_r, n)
    amp_p = complex(e_inc @ basis.e_p_in)
    amp_v = complex(e_inc @ basis.e_v)
    return (GAMMA_PARALLEL * amp_p * basis.e_p_out.astype(np.complex128)
            + GAMMA_PERP * amp_v * basis.e_v.astype(np.complex128))


@dataclass(frozen=True)
class TubeGeometry:
    """Illuminated footprint of one ray tube on the tangent plane at its hit.

    u_edge/v_edge are the tube cross-section edge vectors (meters,
    perpendicular to the central ray); u_proj/v_proj their projections
    along the ray onto the tangent plane.
    """

    point: np.ndarray
    normal: np.ndarray
    u_edge: np.ndarray
    v_edge: np.ndarray
    u_proj: np.ndarray = field(init=False)
    v_proj: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "point", as_vec3(self.point, "point"))
        object.__setattr__(self, "normal", as_unit3(self.normal, "normal"))
        object.__setattr__(self, "u_edge", as_vec3(self.u_edge, "u_edge"))
        object.__setattr__(self, "v_edge", as_vec3(self.v_edge, "v_edge"))

    @classmethod
    def at_hit(cls, point, normal, ray_dir, u_edge, v_edge) -> "TubeGeometry":
        geom = cls(point, normal, u_edge, v_edge)
        n = geom.normal
        k = np.asarray(ray_dir, dtype=np.float64)
        slope = float(np.dot(n, k))
        # grazing guard: the sinc factors bound the contribution anyway
        if abs(slope) < 1e-6:
            slope = math.copysign(1e-6, slope if slope != 0.0 else -1.0)
        u_proj = geom.u_edge - k * (float(np.dot(n, geom.u_edge)) / slope)
        v_proj = geom.v_edge - k * (float(np.dot(n, geom.v_edge)) / slope)
        object.__setattr__(geom, "u_proj", u_proj)
        object.__setattr__(geom, "v_proj", v_proj)
        return geom

    @property
    def u_len(self) -> float:
        return float(np.linalg.norm(self.u_proj))

    @property
    def v_len(self) -> float:
        return float(np.linalg.norm(self.v_proj))


def tube_integral(geom: TubeGeometry, k_i_vec, k_s_vec) -> complex:
    """Closed-form phase integral of exp(-j(k_i - k_s).r') over the footprint
    parallelogram: U'V' sinc(dk.u'/2) sinc(dk.v'/2) exp(-j dk.p)."""
    dk = np.asarray(k_i_vec, dtype=np.float64) - np.asarray(k_s_vec, dtype=np.float64)
    arg_u = 0.5 * float(np.dot(dk, geom.u_proj))
    arg_v = 0.5 * float(np.dot(dk, geom.v_proj))
    phase = -1j * float(np.dot(dk, geom.point))
    return geom.u_len * geom.v_len * sinc(arg_u) * sinc(arg_v) * np.exp(phase)


def ray_contribution(wave: PlaneWave, k_s, hit_pos, hit_nor, path_len,
                     valid, visible, u_edge, v_edge):
    """Scattered far-field contribution of a single bounce chain.

    hit_pos/hit_nor: (M, 3) world positions and unit normals of the chain.
    path_len: geometric distance from the launch plane to the last hit (m).
    u_edge/v_edge: tube cross-section edge vectors at launch (meters).
    The polarization and the cross-section edges are mirror-transported
    through bounces 1..M-1; the footprint integral and the surface-current
    cross products are evaluated at the final hit only.
    Invalid (valid=0) or shadowed (visible=0) chains contribute exact zero.
    """
    if not valid or not visible:
        return np.zeros(3, dtype=np.complex128)
    hit_pos = np.atleast_2d(np.asarray(hit_pos, dtype=np.float64))
    hit_nor = np.atleast_2d(np.asarray(hit_nor, dtype=np.float64))
    n_bounce = hit_pos.shape[0]
    k_s = np.asarray(k_s, dtype=np.float64)

    e_cur = wave.amplitude * np.exp(-1j * wave.phase0) * wave.e_pol.astype(np.complex128)
    dir_cur = wave.propagation.copy()
    u_cur = np.asarray(u_edge, dtype=np.float64).copy()
    v_cur = np.asarray(v_edge, dtype=np.float64).copy()
    for b in range(n_bounce - 1):
        n_b = hit_nor[b]
        dir_next = dir_cur - 2.0 * float(np.dot(dir_cur, n_b)) * n_b
        e_cur = reflect_field(e_cur, dir_cur, dir_next, n_b)
        u_cur = u_cur - 2.0 * float(np.dot(u_cur, n_b)) * n_b
        v_cur = v_cur - 2.0 * float(np.dot(v_cur, n_b)) * n_b
        dir_cur = dir_next

    last_pos = hit_pos[-1]
    last_nor = hit_nor[-1]
    geom = TubeGeometry.at_hit(last_pos, last_nor, dir_cur, u_cur, v_cur)
    dk = wave.k0 * dir_cur - wave.k0 * k_s
    footprint = (geom.u_len * geom.v_len
                 * sinc(0.5 * float(np.dot(dk, geom.u_proj)))
                 * sinc(0.5 * float(np.dot(dk, geom.v_proj))))

    # eta0 of the radiation integral cancels against H = (k x E)/eta0
    h_vec = np.cross(dir_cur, e_cur)
    current = np.cross(last_nor.astype(np.complex128), h_vec)
    pattern = np.cross(np.cross(current, k_s), k_s)
    phase = np.exp(-1j * (wave.k0 * path_len - wave.k0 * float(np.dot(k_s, last_pos))))
    return (-1j * wave.k0 / (2.0 * math.pi)) * footprint * pattern * phase


def chain_fields(wave: PlaneWave, k_s, hit_pos, hit_nor, n_bounce, path_len,
                 valid, visible, u_edge, v_edge):
    """Vectorized ray_contribution over many chains.

    hit_pos/hit_nor: (R, B, 3); n_bounce: (R,) ints in [0, B]; path_len,
    valid, visible: (R,). u_edge/v_edge are shared launch edge vectors.
    Returns (R, 3) complex contributions (zero rows for dead chains).
    """
    hit_pos = np.asarray(hit_pos, dtype=np.float64)
    hit_nor = np.asarray(hit_nor, dtype=np.float64)
    n_bounce = np.asarray(n_bounce)
    n_rays = hit_pos.shape[0]
    max_b = hit_pos.shape[1] if hit_pos.ndim == 3 else 0
    k_s = np.asarray(k_s, dtype=np.float64)
    out = np.zeros((n_rays, 3), dtype=np.complex128)
    live = np.asarray(valid, dtype=bool) & np.asarray(visible, dtype=bool) & (n_bounce > 0)
    if not np.any(live):
        return out

    e_cur = np.broadcast_to(
        wave.amplitude * np.exp(-1j * wave.phase0) * wave.e_pol.astype(np.complex128),
        (n_rays, 3)).copy()
    dir_cur = np.broadcast_to(wave.propagation, (n_rays, 3)).copy()
    u_cur = np.broadcast_to(np.asarray(u_edge, dtype=np.float64), (n_rays, 3)).copy()
    v_cur = np.broadcast_to(np.asarray(v_edge, dtype=np.float64), (n_rays, 3)).copy()

    for b in range(max_b - 1):
        act = live & (n_bounce > b + 1)
        if not np.any(act):
            break
        n_b = hit_nor[act, b]
        d_in = dir_cur[act]
        d_out = d_in - 2.0 * np.sum(d_in * n_b, axis=1)[:, None] * n_b
        e_in = e_cur[act]
        e_cur[act] = _reflect_field_rows(e_in, d_in, d_out, n_b)
        u_cur[act] -= 2.0 * np.sum(u_cur[act] * n_b, axis=1)[:, None] * n_b
        v_cur[act] -= 2.0 * np.sum(v_cur[act] * n_b, axis=1)[:, None] * n_b
        dir_cur[act] = d_out

    idx = np.flatnonzero(live)
    last = n_bounce[idx] - 1
    last_pos = hit_pos[idx, last]
    last_nor = hit_nor[idx, last]
    d_last = dir_cur[idx]
    u_last = u_cur[idx]
    v_last = v_cur[idx]

    slope = np.sum(last_nor * d_last, axis=1)
    small = np.abs(slope) < 1e-6
    slope[small] = np.where(slope[small] >= 0.0, 1e-6, -1e-6)
    u_proj = u_last - d_last * (np.sum(last_nor * u_last, axis=1) / slope)[:, None]
    v_proj = v_last - d_last * (np.sum(last_nor * v_last, axis=1) / slope)[:, None]

    dk = wave.k0 * (d_last - k_s[None, :])
    footprint = (np.linalg.norm(u_proj, axis=1) * np.linalg.norm(v_proj, axis=1)
                 * sinc(0.5 * np.sum(dk * u_proj, axis=1))
                 * sinc(0.5 * np.sum(dk * v_proj, axis=1)))

    h_vec = np.cross(d_last.astype(np.complex128), e_cur[idx])
    current = np.cross(last_nor.astype(np.complex128), h_vec)
    pattern = np.cross(np.cross(current, k_s), k_s)
    phase = np.exp(-1j * (wave.k0 * np.asarray(path_len, dtype=np.float64)[idx]
                          - wave.k0 * (last_pos @ k_s)))
    out[idx] = (-1j * wave.k0 / (2.0 * math.pi)) * footprint[:, None] * pattern * phase[:, None]
    return out


def _reflect_field_rows(e_inc, k_i, k_r, n):
    """Row-wise reflect_field on (m, 3) stacks, same conventions."""
    cross = np.cross(k_i, n)
    mag = np.linalg.norm(cross, axis=1)
    e_v = np.empty_like(k_i)
    ok = mag >= 1e-9
    e_v[ok] = cross[ok] / mag[ok, None]
    if np.any(~ok):
        for r in np.flatnonzero(~ok):
            helper = np.array([1.0, 0.0, 0.0])
            if abs(k_i[r, 0]) > 0.9:
                helper = np.array([0.0, 1.0, 0.0])
            hv = np.cross(k_i[r], helper)
            e_v[r] = hv / np.linalg.norm(hv)
    e_p_in = np.cross(e_v, k_i)
    e_p_in /= np.linalg.norm(e_p_in, axis=1)[:, None]
    e_p_out = np.cross(e_v, k_r)
    e_p_out /= np.linalg.norm(e_p_out, axis=1)[:, None]
    amp_p = np.sum(e_inc * e_p_in, axis=1)
    amp_v = np.sum(e_inc * e_v, axis=1)
    return (GAMMA_PARALLEL * amp_p[:, None] * e_p_out
            + GAMMA_PERP * amp_v[:, None] * e_v)


def total_field(contributions) -> np.ndarray:
    """Order-independent complex vector sum via compensated summation."""
    arr = np.asarray(contributions, dtype=np.complex128)
    if arr.size == 0:
        return np.zeros(3, dtype=np.complex128)
    arr = arr.reshape(-1, 3)
    out = np.empty(3, dtype=np.complex128)
    for c in range(3):
        out[c] = math.fsum(arr[:, c].real) + 1j * math.fsum(arr[:, c].imag)
    return out


def rcs_dbsm(e_scat, e0: float) -> float:
    """Monostatic RCS in dBsm: 10 log10(4 pi |Es|^2 / E0^2), floored at -300."""
    if not e0 > 0:
        raise InvalidFieldError("incident amplitude must be positive")
    power = float(np.real(np.vdot(e_scat, e_scat)))
    sigma = 4.0 * math.pi * power / (e0 * e0)
    if sigma <= 0.0:
        return RCS_FLOOR_DBSM
    return max(10.0 * math.log10(sigma), RCS_FLOOR_DBSM)
