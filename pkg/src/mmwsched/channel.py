"""Clustered mmWave channel generation with a two-rate time structure.

Cluster geometry (angles, delays, large-scale gains) is redrawn once per
long block and frozen; small-scale subpath gains evolve slot by slot
through per-subpath Doppler phase rotations. Frequency selectivity enters
through per-PRB delay phases, and the Doppler rate itself shifts slightly
with each PRB's center-frequency offset.

Conventions fixed here:
  - UPA elements indexed row-major (vertical level major, horizontal
    position minor), half-wavelength spacing by default.
  - Elevation angles are measured in the array frame, i.e. after the
    mechanical downtilt has been applied.
  - PRBs are laid out contiguously and centered on the carrier; offsets
    are referenced to each PRB's central frequency.
  - The codebook grid is cell-centered within the covered angular ranges.
"""

import math
from dataclasses import dataclass

import numpy as np

from .config import SimConfig


@dataclass
class Topology:
    """User drop: positions/velocities in the horizontal plane, BS at origin."""
    bs_height: float
    user_positions: np.ndarray   # (I, 2) meters
    user_velocities: np.ndarray  # (I, 2) m/s
    cell_radius: float

    @property
    def n_users(self) -> int:
        return self.user_positions.shape[0]


@dataclass
class ArrayGeometry:
    n_horizontal: int
    n_vertical: int
    element_spacing: float = 0.5   # wavelengths
    boresight_tilt: float = 10.0   # degrees downward

    @property
    def n_elements(self) -> int:
        return self.n_horizontal * self.n_vertical

    @classmethod
    def from_config(cls, config: SimConfig) -> "ArrayGeometry":
        return cls(config.n_tx_h, config.n_tx_v,
                   config.element_spacing_wl, config.downtilt_deg)


@dataclass
class Codebook:
    beams: np.ndarray        # (n_beams, n_tx) complex, unit norm rows
    grid_shape: tuple        # (azimuth_count, elevation_count)
    azimuths_deg: np.ndarray
    elevations_deg: np.ndarray

    def __len__(self) -> int:
        return self.beams.shape[0]

    def beam_angles(self, index: int) -> tuple:
        """Pointing (azimuth, elevation) of a beam; azimuth varies fastest."""
        n_az = self.grid_shape[0]
        return float(self.azimuths_deg[index % n_az]), float(self.elevations_deg[index // n_az])


@dataclass
class Cluster:
    dep_az_deg: float
    dep_el_deg: float
    arr_az_deg: float
    delay_s: float
    gain: float          # linear power
    los: bool
    sub_dep_az: np.ndarray      # (S,) degrees
    sub_dep_el: np.ndarray
    sub_arr_az: np.ndarray
    sub_phase0: np.ndarray      # (S,) radians
    sub_cos_doppler: np.ndarray  # (S,) cos of Doppler arrival angle


@dataclass
class PathSet:
    """Per-user cluster draws, frozen for one long block."""
    clusters: list     # list over users of list[Cluster]
    start_slot: int

    @property
    def n_users(self) -> int:
        return len(self.clusters)


@dataclass
class ChannelTensor:
    h: np.ndarray      # (K, I, n_tx, n_rx) complex
    slot_index: int


# --------------------------------------------------------------------------
# Topology

def generate_topology(config: SimConfig, rng: np.random.Generator) -> Topology:
    """Drop users uniformly in the cell disc with random constant velocities."""
    radii = config.cell_radius_m * np.sqrt(rng.uniform(size=config.n_users))
    angles = rng.uniform(0.0, 2.0 * np.pi, size=config.n_users)
    positions = np.column_stack((radii * np.cos(angles), radii * np.sin(angles)))
    speeds = rng.uniform(0.0, config.speed_max_mps, size=config.n_users)
    directions = rng.uniform(0.0, 2.0 * np.pi, size=config.n_users)
    velocities = np.column_stack((speeds * np.cos(directions), speeds * np.sin(directions)))
    return Topology(config.bs_height_m, positions, velocities, config.cell_radius_m)


def advance_topology(topology: Topology, dt: float) -> Topology:
    """Move users for one slot; reflect velocity at the cell edge."""
    pos = topology.user_positions + dt * topology.user_velocities
    vel = topology.user_velocities.copy()
    norms = np.linalg.norm(pos, axis=1)
    outside = norms > topology.cell_radius
    if np.any(outside) and topology.cell_radius > 0:
        normals = pos[outside] / norms[outside, None]
        v = vel[outside]
        vel[outside] = v - 2.0 * np.sum(v * normals, axis=1, keepdims=True) * normals
        pos[outside] = normals * topology.cell_radius
    return Topology(topology.bs_height, pos, vel, topology.cell_radius)


# --------------------------------------------------------------------------
# Array responses and codebook

def steering_vector(geometry: ArrayGeometry, azimuth_deg: float, elevation_deg: float) -> np.ndarray:
    """Unit-norm planar-array response at the given array-frame angles.

    Element (m, n) with m horizontal, n vertical carries phase
    2*pi*spacing*(m*sin(az)*cos(el) + n*sin(el)); elements are flattened
    row-major with the horizontal index varying fastest.
    """
    if not -180.0 <= azimuth_deg <= 180.0:
        raise ValueError(f"azimuth {azimuth_deg} out of [-180, 180]")
    if not -90.0 <= elevation_deg <= 90.0:
        raise ValueError(f"elevation {elevation_deg} out of [-90, 90]")
    az = math.radians(azimuth_deg)
    el = math.radians(elevation_deg)
    m = np.arange(geometry.n_horizontal)
    n = np.arange(geometry.n_vertical)
    phase_h = 2.0 * np.pi * geometry.element_spacing * m * math.sin(az) * math.cos(el)
    phase_v = 2.0 * np.pi * geometry.element_spacing * n * math.sin(el)
    phases = phase_v[:, None] + phase_h[None, :]
    vec = np.exp(1j * phases).ravel()
    return vec / math.sqrt(geometry.n_elements)


def _steering_many(geometry: ArrayGeometry, az_deg: np.ndarray, el_deg: np.ndarray) -> np.ndarray:
    """Stacked steering vectors, one row per (az, el) pair."""
    az = np.radians(az_deg)
    el = np.radians(el_deg)
    m = np.arange(geometry.n_horizontal)
    n = np.arange(geometry.n_vertical)
    ph = (2.0 * np.pi * geometry.element_spacing
          * (n[None, :, None] * np.sin(el)[:, None, None]
             + m[None, None, :] * (np.sin(az) * np.cos(el))[:, None, None]))
    vecs = np.exp(1j * ph).reshape(az.shape[0], geometry.n_elements)
    return vecs / math.sqrt(geometry.n_elements)


def ula_response(n_elements: int, azimuth_deg: float, spacing: float = 0.5) -> np.ndarray:
    """Unit-norm uniform-linear-array response (used for the user side)."""
    k = np.arange(n_elements)
    vec = np.exp(1j * 2.0 * np.pi * spacing * k * math.sin(math.radians(azimuth_deg)))
    return vec / math.sqrt(n_elements)


def build_codebook(geometry: ArrayGeometry, az_range: tuple = (-180.0, 180.0),
                   el_range: tuple = (-30.0, 30.0), grid: tuple = (32, 8)) -> Codebook:
    """Evenly spaced beam grid over the covered sector, azimuth fastest.

    Grid points sit at cell centers so no two beams collapse onto the
    exact broadside/endfire directions.
    """
    n_az, n_el = grid
    if n_az < 1 or n_el < 1:
        raise ValueError("grid counts must be >= 1")
    az_step = (az_range[1] - az_range[0]) / n_az
    el_step = (el_range[1] - el_range[0]) / n_el
    azimuths = az_range[0] + az_step * (np.arange(n_az) + 0.5)
    elevations = el_range[0] + el_step * (np.arange(n_el) + 0.5)
    az_grid = np.tile(azimuths, n_el)
    el_grid = np.repeat(elevations, n_az)
    beams = _steering_many(geometry, az_grid, el_grid)
    return Codebook(beams, (n_az, n_el), azimuths, elevations)


# --------------------------------------------------------------------------
# Resource-grid frequency layout

def prb_center_offset(k: int, config: SimConfig) -> float:
    """Offset of PRB k's central frequency from the carrier, in Hz (k is 1-based)."""
    if not 1 <= k <= config.n_prb:
        raise ValueError(f"PRB index {k} out of range 1..{config.n_prb}")
    return (k - (config.n_prb + 1) / 2.0) * config.prb_width_hz


def prb_center_offsets(config: SimConfig) -> np.ndarray:
    k = np.arange(1, config.n_prb + 1)
    return (k - (config.n_prb + 1) / 2.0) * config.prb_width_hz


def doppler_for_prb(k: int, config: SimConfig) -> float:
    """Maximum Doppler shift at PRB k, scaled by its frequency offset."""
    return config.doppler_max_hz * (1.0 + prb_center_offset(k, config) / config.carrier_hz)


def doppler_shifts(config: SimConfig) -> np.ndarray:
    return config.doppler_max_hz * (1.0 + prb_center_offsets(config) / config.carrier_hz)


# --------------------------------------------------------------------------
# Large-scale recipe

def path_loss_db(distance_m: float, los: bool, config: SimConfig) -> float:
    """Distance law: intercept + 10*exponent*log10(d), no shadowing term."""
    d = max(distance_m, 1.0)
    if los:
        return config.pl_los_intercept_db + 10.0 * config.pl_los_exponent * math.log10(d)
    return config.pl_nlos_intercept_db + 10.0 * config.pl_nlos_exponent * math.log10(d)


def realize_long_block(topology: Topology, rng: np.random.Generator,
                       config: SimConfig, start_slot: int = 0) -> PathSet:
    """Draw cluster geometry for every user; frozen until the next long block.

    LOS is decided by exp(-d/los_decay); the strongest cluster of a LOS
    user points at the geometric direction, all other clusters scatter
    around it. Per-cluster powers split the (shadowed) large-scale gain.
    """
    spread = config.angular_spread_deg
    all_clusters = []
    for i in range(topology.n_users):
        x, y = topology.user_positions[i]
        d2 = math.hypot(x, y)
        d3 = math.hypot(d2, topology.bs_height)
        az_geo = math.degrees(math.atan2(y, x))
        el_geo = math.degrees(math.atan2(-topology.bs_height, d2)) + config.downtilt_deg

        los = rng.uniform() < math.exp(-d3 / config.los_decay_m)
        shadow_sigma = config.pl_los_shadow_db if los else config.pl_nlos_shadow_db
        pl = path_loss_db(d3, los, config) + rng.normal(0.0, shadow_sigma)
        total_gain = 10.0 ** ((config.link_gain_offset_db - pl) / 10.0)

        n_clusters = int(rng.integers(1, config.max_clusters + 1))
        fractions = rng.exponential(size=n_clusters)
        fractions = np.sort(fractions / fractions.sum())[::-1]

        clusters = []
        for c in range(n_clusters):
            if c == 0 and los:
                dep_az, dep_el = az_geo, el_geo
            else:
                dep_az = _wrap_deg(az_geo + rng.uniform(-config.cluster_az_spread_deg,
                                                        config.cluster_az_spread_deg))
                dep_el = float(np.clip(el_geo + rng.uniform(-config.cluster_el_spread_deg,
                                                            config.cluster_el_spread_deg),
                                       -90.0, 90.0))
            s = config.n_subpaths
            arr_az = rng.uniform(-180.0, 180.0)
            clusters.append(Cluster(
                dep_az_deg=dep_az,
                dep_el_deg=dep_el,
                arr_az_deg=arr_az,
                delay_s=rng.uniform(0.0, config.delay_max_s),
                gain=float(total_gain * fractions[c]),
                los=bool(los and c == 0),
                sub_dep_az=_wrap_deg(dep_az + rng.uniform(-spread, spread, size=s)),
                sub_dep_el=np.clip(dep_el + rng.uniform(-spread, spread, size=s), -90.0, 90.0),
                sub_arr_az=_wrap_deg(arr_az + rng.uniform(-spread, spread, size=s)),
                sub_phase0=rng.uniform(0.0, 2.0 * np.pi, size=s),
                sub_cos_doppler=np.cos(rng.uniform(0.0, 2.0 * np.pi, size=s)),
            ))
        all_clusters.append(clusters)
    return PathSet(all_clusters, start_slot)


def _wrap_deg(angle):
    """Wrap degrees into (-180, 180]."""
    wrapped = np.mod(np.asarray(angle, dtype=float) + 180.0, 360.0) - 180.0
    wrapped = np.where(wrapped == -180.0, 180.0, wrapped)
    if np.ndim(angle) == 0:
        return float(wrapped)
    return wrapped


# --------------------------------------------------------------------------
# Small-scale evolution

def evolve_short_block(paths: PathSet, topology: Topology, slot: int,
                       config: SimConfig) -> ChannelTensor:
    """Assemble the per-PRB channel tensor at an absolute slot index.

    Each subpath contributes amplitude sqrt(gain/S), a per-PRB delay phase
    exp(-j*2*pi*tau*df_k), and a Doppler phase advancing by
    2*pi*f'_k*cos(theta)*(v/v_max)*dT per slot. Pure in (paths, slot), so
    identical inputs reproduce identical tensors.
    """
    geometry = ArrayGeometry.from_config(config)
    offsets = prb_center_offsets(config)            # (K,)
    dopplers = doppler_shifts(config)               # (K,)
    dt = config.slot_duration_s
    elapsed = slot - paths.start_slot
    n_users = paths.n_users
    h = np.zeros((config.n_prb, n_users, config.n_tx, config.n_rx), dtype=complex)
    scale = math.sqrt(config.n_tx * config.n_rx)

    for i in range(n_users):
        speed = float(np.linalg.norm(topology.user_velocities[i]))
        speed_frac = speed / config.speed_max_mps if config.speed_max_mps > 0 else 0.0
        amps, delays, phase0, cosd = [], [], [], []
        dep_az, dep_el, arr_az = [], [], []
        for cl in paths.clusters[i]:
            s = cl.sub_phase0.shape[0]
            amps.append(np.full(s, math.sqrt(cl.gain / s)))
            delays.append(np.full(s, cl.delay_s))
            phase0.append(cl.sub_phase0)
            cosd.append(cl.sub_cos_doppler)
            dep_az.append(cl.sub_dep_az)
            dep_el.append(cl.sub_dep_el)
            arr_az.append(cl.sub_arr_az)
        amps = np.concatenate(amps)
        delays = np.concatenate(delays)
        phase0 = np.concatenate(phase0)
        cosd = np.concatenate(cosd)

        a_tx = _steering_many(geometry, np.concatenate(dep_az), np.concatenate(dep_el))
        arr = np.concatenate(arr_az)
        k_idx = np.arange(config.n_rx)
        a_rx = np.exp(1j * 2.0 * np.pi * config.element_spacing_wl
                      * k_idx[None, :] * np.sin(np.radians(arr))[:, None])
        a_rx /= math.sqrt(config.n_rx)

        # (K, S) per-subpath coefficients
        doppler_phase = (2.0 * np.pi * dt * elapsed * speed_frac
                         * dopplers[:, None] * cosd[None, :])
        delay_phase = -2.0 * np.pi * delays[None, :] * offsets[:, None]
        coeff = amps[None, :] * np.exp(1j * (phase0[None, :] + doppler_phase + delay_phase))
        h[:, i] = scale * np.einsum("ks,sm,sn->kmn", coeff, a_tx, a_rx.conj())

    return ChannelTensor(h, slot)
