"""Synthetic fixed-wireless-access channels.

A statistical stand-in for a ray-traced rural macro cell: a 3GPP 3-D
element pattern at the base station, a single-slope path loss, and an
8-tap Rayleigh channel whose taps arrive from directions scattered around
the line-of-sight bearing of each user. Everything is a pure function of
:class:`ScenarioConfig` (including its seed).

Model coefficients
------------------
Element pattern
    3 dB beamwidths 65 deg (vertical and horizontal), side-lobe and
    front-to-back limits 30 dB.
Path loss
    ``PL = 20 log10(4 pi f_c d0 / c) + 10 alpha log10(d3d / d0)`` with
    ``d0 = 1 m`` and ``alpha = 2.1``; ``d3d`` includes the height
    difference. Within 2 dB of the RMa LOS PL1 curve at 3.5 GHz between
    0.5 and 2 km.
BS ports
    ``n_T`` horizontal columns spaced ``F_in`` wavelengths; each column is a
    vertical sub-array of ``A_in`` elements steered to the electric downtilt
    by a phase progression. Single polarization.
Small-scale fading
    ``L = 8`` taps, exponential power delay profile decaying 3 dB per tap,
    tap ``l`` delayed ``l / W``. Tap 0 arrives from the line-of-sight
    direction; the others are offset by Gaussian angles with 5 deg azimuth
    and 1.5 deg zenith spread.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .errors import InputError, ParseError, ValidationError

__all__ = [
    "AntennaConfig",
    "ScenarioConfig",
    "ChannelSet",
    "element_pattern",
    "rma_pathloss",
    "generate_channels",
    "save_channels",
    "load_channels",
    "load_scenario",
    "dump_scenario",
    "SPEED_OF_LIGHT",
]

SPEED_OF_LIGHT = 299_792_458.0

THETA_3DB = 65.0
PHI_3DB = 65.0
A_MAX = 30.0
SLA_V = 30.0

PATHLOSS_EXPONENT = 2.1
PATHLOSS_REF_DISTANCE = 1.0

NUM_TAPS = 8
TAP_DECAY_DB = 3.0
AZIMUTH_SPREAD_DEG = 5.0
ZENITH_SPREAD_DEG = 1.5
SECTOR_HALF_WIDTH_DEG = 60.0


def dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watts_to_dbm(watts):
    return 10.0 * np.log10(np.asarray(watts, dtype=float)) + 30.0


@dataclass(frozen=True)
class AntennaConfig:
    """Base-station panel parameters (3GPP 3-D panel style)."""

    vertical_elements: int = 4
    horizontal_elements: int = 2
    polarization_indicator: int = 4
    electric_downtilt: float = 12.0
    element_spacing: float = 0.5
    boresight_gain: float = 13.0

    def __post_init__(self):
        if self.vertical_elements < 1 or self.horizontal_elements < 1:
            raise ValidationError("antenna element counts must be >= 1")
        if not self.element_spacing > 0:
            raise ValidationError("element_spacing must be > 0")
        if not np.isfinite(self.boresight_gain):
            raise ValidationError("boresight_gain must be finite")


@dataclass(frozen=True)
class ScenarioConfig:
    """Physical scenario. Defaults reproduce the reference experiment table.

    ``user_azimuths`` (degrees, one per user) pins the user bearings; when
    ``None`` they are drawn from the seed, uniform over a 120 deg sector.
    """

    num_users: int = 3
    bs_antennas: int = 2
    user_antennas: tuple = (1, 1, 1)
    bs_height: float = 30.0
    ue_height: float = 6.0
    distances: tuple = (500.0, 500.0, 500.0)
    bandwidth: float = 100e6
    carrier_freq: float = 3.5e9
    num_subcarriers: int = 64
    transmit_power: float = 50.0
    noise_psd: float = -174.0
    bs_gain: float = 13.0
    ue_gain: float = 0.0
    antenna: AntennaConfig = field(default_factory=AntennaConfig)
    seed: int = 0
    user_azimuths: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "user_antennas", tuple(int(a) for a in self.user_antennas))
        object.__setattr__(self, "distances", tuple(float(d) for d in self.distances))
        if self.user_azimuths is not None:
            object.__setattr__(self, "user_azimuths", tuple(float(a) for a in self.user_azimuths))
        if isinstance(self.antenna, dict):
            object.__setattr__(self, "antenna", AntennaConfig(**self.antenna))
        if self.num_users < 1 or self.bs_antennas < 1 or self.num_subcarriers < 1:
            raise ValidationError("num_users, bs_antennas and num_subcarriers must be >= 1")
        if len(self.user_antennas) != self.num_users or len(self.distances) != self.num_users:
            raise ValidationError(
                f"user_antennas ({len(self.user_antennas)}) and distances ({len(self.distances)}) "
                f"must both have num_users={self.num_users} entries"
            )
        if self.user_azimuths is not None and len(self.user_azimuths) != self.num_users:
            raise ValidationError("user_azimuths must have num_users entries")
        if min(self.user_antennas) < 1:
            raise ValidationError("every user needs at least one antenna")
        if min(self.distances) <= 0:
            raise ValidationError("distances must be > 0")
        if not self.bandwidth > 0 or not self.carrier_freq > 0:
            raise ValidationError("bandwidth and carrier_freq must be > 0")
        if self.bs_height <= 0 or self.ue_height <= 0:
            raise ValidationError("heights must be > 0")
        if self.antenna.boresight_gain != self.bs_gain:
            raise ValidationError(
                f"bs_gain ({self.bs_gain}) disagrees with antenna.boresight_gain "
                f"({self.antenna.boresight_gain})"
            )

    @property
    def wavelength(self):
        return SPEED_OF_LIGHT / self.carrier_freq

    @property
    def noise_power_per_subcarrier(self):
        """Noise power in watts on one subcarrier (PSD times W/N)."""
        return float(dbm_to_watts(self.noise_psd) * self.bandwidth / self.num_subcarriers)

    @property
    def transmit_power_watts(self):
        return float(dbm_to_watts(self.transmit_power))

    def to_dict(self):
        out = asdict(self)
        out["user_antennas"] = list(self.user_antennas)
        out["distances"] = list(self.distances)
        out["user_azimuths"] = None if self.user_azimuths is None else list(self.user_azimuths)
        return out

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InputError(f"unknown scenario keys: {sorted(unknown)}")
        antenna = dict(data.pop("antenna", None) or {})
        if "bs_gain" in data and "boresight_gain" not in antenna:
            antenna["boresight_gain"] = data["bs_gain"]
        if "boresight_gain" in antenna and "bs_gain" not in data:
            data["bs_gain"] = antenna["boresight_gain"]
        num_users = data.get("num_users")
        if num_users is not None:
            # broadcast scalar per-user entries
            for key in ("user_antennas", "distances"):
                if key in data and np.isscalar(data[key]):
                    data[key] = [data[key]] * int(num_users)
                if key not in data:
                    default = 1 if key == "user_antennas" else 500.0
                    data[key] = [default] * int(num_users)
        return cls(antenna=AntennaConfig(**antenna), **data)

    def scenario_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_(self, **changes):
        """Copy with some fields replaced; per-user lists follow ``num_users``."""
        if "num_users" in changes:
            u = changes["num_users"]
            changes.setdefault("user_antennas", (self.user_antennas[0],) * u)
            changes.setdefault("distances", (self.distances[0],) * u)
            if self.user_azimuths is not None:
                changes.setdefault("user_azimuths", (self.user_azimuths[0],) * u)
        return replace(self, **changes)


def load_scenario(path):
    """Read a YAML or JSON scenario file; missing keys take the defaults."""
    import yaml

    text = Path(path).read_text()
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise InputError(f"{path}: scenario file must hold a mapping")
    if "scenario" in data and isinstance(data["scenario"], dict):
        data = data["scenario"]
    return ScenarioConfig.from_dict(data)


def dump_scenario(config, path):
    import yaml

    Path(path).write_text(yaml.safe_dump(config.to_dict(), sort_keys=False))


def element_pattern(zenith, azimuth, config=None):
    """Element gain in dBi toward (zenith, azimuth), both in degrees.

    Returns an array shaped like the broadcast of the inputs (a float for
    scalar input).
    """
    config = config or AntennaConfig()
    zen = np.asarray(zenith, dtype=float)
    az = np.asarray(azimuth, dtype=float)
    if np.any((zen < 0) | (zen > 180)) or np.any((az < -180) | (az > 180)):
        raise InputError("angles must lie in [0, 180] x [-180, 180] degrees")
    tilt = 90.0 + config.electric_downtilt
    a_v = -np.minimum(12.0 * ((zen - tilt) / THETA_3DB) ** 2, SLA_V)
    a_h = -np.minimum(12.0 * (az / PHI_3DB) ** 2, A_MAX)
    gain = config.boresight_gain - np.minimum(-(a_v + a_h), A_MAX)
    return float(gain) if gain.ndim == 0 else gain


def rma_pathloss(distance, bs_height, ue_height, carrier):
    """Single-slope rural-macro path loss in dB (see module docstring)."""
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0) or bs_height <= 0 or ue_height <= 0:
        raise InputError("distance and heights must be > 0")
    d3 = np.sqrt(d**2 + (bs_height - ue_height) ** 2)
    pl0 = 20.0 * np.log10(4.0 * np.pi * carrier * PATHLOSS_REF_DISTANCE / SPEED_OF_LIGHT)
    loss = pl0 + 10.0 * PATHLOSS_EXPONENT * np.log10(d3 / PATHLOSS_REF_DISTANCE)
    return float(loss) if loss.ndim == 0 else loss


def _port_responses(zenith, azimuth, n_ports, antenna):
    """Complex amplitude of every BS port toward the given directions.

    ``zenith``/``azimuth`` are arrays of the same shape ``S``; the result has
    shape ``S + (n_ports,)`` and includes the element pattern gain.
    """
    th = np.radians(zenith)
    ph = np.radians(azimuth)
    spacing = antenna.element_spacing
    m = np.arange(antenna.vertical_elements)
    tilt = np.radians(90.0 + antenna.electric_downtilt)
    # vertical sub-array, normalized to unit peak
    phase_v = 2j * np.pi * spacing * np.multiply.outer(np.cos(th) - np.cos(tilt), m)
    af_v = np.exp(phase_v).sum(axis=-1) / antenna.vertical_elements
    gain_db = element_pattern(np.clip(zenith, 0, 180), np.clip(azimuth, -180, 180), antenna)
    amp = np.sqrt(10.0 ** (np.asarray(gain_db) / 10.0)) * af_v
    b = np.arange(n_ports)
    steer = np.exp(2j * np.pi * spacing * np.multiply.outer(np.sin(th) * np.sin(ph), b))
    return amp[..., None] * steer


def generate_channels(scenario):
    """Draw the BC channel set for ``scenario``.

    Matrices are in linear amplitude (large-scale gain included); the noise
    covariance is the per-subcarrier thermal noise in watts. Transmit power
    is not applied here.
    """
    rng = np.random.default_rng(scenario.seed)
    U, nt, N = scenario.num_users, scenario.bs_antennas, scenario.num_subcarriers
    if scenario.user_azimuths is None:
        azimuths = rng.uniform(-SECTOR_HALF_WIDTH_DEG, SECTOR_HALF_WIDTH_DEG, size=U)
    else:
        azimuths = np.asarray(scenario.user_azimuths, dtype=float)

    pdp = 10.0 ** (-TAP_DECAY_DB * np.arange(NUM_TAPS) / 10.0)
    pdp /= pdp.sum()
    delays = np.exp(-2j * np.pi * np.outer(np.arange(N), np.arange(NUM_TAPS)) / N)  # (N, L)

    rows = []
    for u in range(U):
        dist = scenario.distances[u]
        zenith_los = 90.0 + np.degrees(np.arctan2(scenario.bs_height - scenario.ue_height, dist))
        loss_db = rma_pathloss(dist, scenario.bs_height, scenario.ue_height, scenario.carrier_freq)
        large_scale = np.sqrt(10.0 ** ((scenario.ue_gain - loss_db) / 10.0))
        for _ in range(scenario.user_antennas[u]):
            d_az = rng.normal(0.0, AZIMUTH_SPREAD_DEG, size=NUM_TAPS)
            d_zen = rng.normal(0.0, ZENITH_SPREAD_DEG, size=NUM_TAPS)
            d_az[0] = d_zen[0] = 0.0
            az = (azimuths[u] + d_az + 180.0) % 360.0 - 180.0
            zen = np.clip(zenith_los + d_zen, 0.0, 180.0)
            taps = np.sqrt(pdp / 2.0) * (rng.standard_normal(NUM_TAPS) + 1j * rng.standard_normal(NUM_TAPS))
            spatial = _port_responses(zen, az, nt, scenario.antenna) * taps[:, None]  # (L, nt)
            rows.append(large_scale * (delays @ spatial))  # (N, nt)
    matrices = np.stack(rows, axis=1)  # (N, n_R, nt)
    noise = scenario.noise_power_per_subcarrier * np.eye(sum(scenario.user_antennas), dtype=complex)
    return ChannelSet(
        matrices=matrices,
        partition=_contiguous_partition(scenario.user_antennas),
        noise=noise,
        side="bc",
        seed=scenario.seed,
        scenario_hash=scenario.scenario_hash(),
    )


def _contiguous_partition(dims):
    out, start = [], 0
    for u, d in enumerate(dims):
        out.append((u, start, start + int(d)))
        start += int(d)
    return tuple(out)


@dataclass(frozen=True, eq=False)
class ChannelSet:
    """Per-subcarrier channel matrices with a per-user block partition.

    Parameters
    ----------
    matrices : ndarray, shape (N, rows, cols), complex
    partition : sequence of (user, start, stop)
        Users own row blocks when ``side == "bc"`` (``rows = n_R``) and
        column blocks when ``side == "mac"`` (``cols = n_R``). The blocks
        tile the user axis exactly; users are labelled ``0 .. U-1``.
    noise : ndarray, shape (r, r) or (N, r, r)
        Noise covariance at the receiver side (``n_R`` for BC, ``n_T`` for
        MAC). Hermitian, positive diagonal.
    """

    matrices: np.ndarray
    partition: tuple
    noise: np.ndarray
    side: str = "bc"
    seed: int | None = None
    scenario_hash: str = ""

    def __post_init__(self):
        mats = np.asarray(self.matrices, dtype=complex)
        if mats.ndim == 2:
            mats = mats[None]
        if mats.ndim != 3:
            raise ValidationError("matrices must have shape (N, rows, cols)")
        object.__setattr__(self, "matrices", mats)
        noise = np.asarray(self.noise, dtype=complex)
        object.__setattr__(self, "noise", noise)
        part = tuple((int(u), int(a), int(b)) for u, a, b in self.partition)
        object.__setattr__(self, "partition", part)
        if self.side not in ("bc", "mac"):
            raise ValidationError(f"side must be 'bc' or 'mac', got {self.side!r}")
        self.validate()

    def validate(self):
        users = sorted(u for u, _, _ in self.partition)
        if users != list(range(len(users))):
            raise ValidationError(f"partition must label users 0..U-1 exactly once, got {users}")
        spans = sorted((a, b) for _, a, b in self.partition)
        pos = 0
        for a, b in spans:
            if a != pos or b <= a:
                raise ValidationError("partition blocks must be non-empty and tile the user axis")
            pos = b
        user_axis = self.matrices.shape[1] if self.side == "bc" else self.matrices.shape[2]
        if pos != user_axis:
            raise ValidationError(
                f"partition covers {pos} antennas but the user axis has {user_axis}"
            )
        r = self.receive_dim
        nz = self.noise
        if nz.shape not in ((r, r), (self.num_subcarriers, r, r)):
            raise ValidationError(f"noise covariance must be ({r},{r}) or (N,{r},{r}), got {nz.shape}")
        if not np.allclose(nz, np.swapaxes(nz, -1, -2).conj(), atol=1e-12 * max(1e-300, np.abs(nz).max())):
            raise ValidationError("noise covariance is not Hermitian")
        if np.any(np.diagonal(nz, axis1=-2, axis2=-1).real <= 0):
            raise ValidationError("noise covariance must have a strictly positive diagonal")
        if not np.all(np.isfinite(self.matrices)):
            raise ValidationError("channel matrices contain non-finite values")

    @property
    def num_subcarriers(self):
        return self.matrices.shape[0]

    @property
    def num_users(self):
        return len(self.partition)

    @property
    def receive_dim(self):
        # rows are the receiving antennas on both sides
        return self.matrices.shape[1]

    @property
    def user_dims(self):
        """Antenna count of each user, indexed by user label."""
        dims = [0] * self.num_users
        for u, a, b in self.partition:
            dims[u] = b - a
        return tuple(dims)

    @property
    def bs_dim(self):
        return self.matrices.shape[2] if self.side == "bc" else self.matrices.shape[1]

    def user_slice(self, u):
        for user, a, b in self.partition:
            if user == u:
                return slice(a, b)
        raise InputError(f"no user {u}")

    def user_block(self, u):
        """All subcarriers of user ``u``'s block: (N, n_u, n_T) for BC, (N, n_T, n_u) for MAC."""
        s = self.user_slice(u)
        return self.matrices[:, s, :] if self.side == "bc" else self.matrices[:, :, s]

    def noise_per_subcarrier(self):
        if self.noise.ndim == 2:
            return np.broadcast_to(self.noise, (self.num_subcarriers,) + self.noise.shape)
        return self.noise

    def user_gains(self):
        """Sum over subcarriers of the squared Frobenius norm of each user's block."""
        return np.array([np.sum(np.abs(self.user_block(u)) ** 2) for u in range(self.num_users)])

    def subcarrier_gains(self):
        """(U, N) squared Frobenius norm per user and subcarrier."""
        return np.array(
            [np.sum(np.abs(self.user_block(u)) ** 2, axis=(1, 2)) for u in range(self.num_users)]
        )

    def __eq__(self, other):
        if not isinstance(other, ChannelSet):
            return NotImplemented
        return (
            self.side == other.side
            and self.partition == other.partition
            and self.seed == other.seed
            and self.scenario_hash == other.scenario_hash
            and self.matrices.shape == other.matrices.shape
            and np.array_equal(self.matrices, other.matrices)
            and self.noise.shape == other.noise.shape
            and np.array_equal(self.noise, other.noise)
        )

    __hash__ = None


# --- channel file -----------------------------------------------------------
#
# layout: MAGIC (8 bytes) | version (1 byte) | header length (uint32 LE) |
#         header (UTF-8 JSON) | matrices (complex128 LE, row-major) |
#         noise (complex128 LE, row-major)

MAGIC = b"MCNOMACH"
FILE_VERSION = 1


def save_channels(channels, path):
    header = {
        "side": channels.side,
        "num_users": channels.num_users,
        "num_subcarriers": channels.num_subcarriers,
        "shape": list(channels.matrices.shape),
        "bs_antennas": channels.bs_dim,
        "partition": [list(p) for p in channels.partition],
        "noise_shape": list(channels.noise.shape),
        "seed": channels.seed,
        "scenario_hash": channels.scenario_hash,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<BI", FILE_VERSION, len(blob)))
    buf.write(blob)
    buf.write(np.ascontiguousarray(channels.matrices, dtype="<c16").tobytes())
    buf.write(np.ascontiguousarray(channels.noise, dtype="<c16").tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_channels(path):
    data = Path(path).read_bytes()
    return _decode_channels(data)


def _decode_channels(data):
    n_magic = len(MAGIC)
    if len(data) < n_magic:
        raise ParseError("file shorter than the magic number", len(data))
    if data[:n_magic] != MAGIC:
        raise ParseError("bad magic number, not a channel file", 0)
    if len(data) < n_magic + 5:
        raise ParseError("truncated fixed header", len(data))
    version, hlen = struct.unpack_from("<BI", data, n_magic)
    if version != FILE_VERSION:
        raise ParseError(f"unsupported channel file version {version}", n_magic)
    start = n_magic + 5
    if len(data) < start + hlen:
        raise ParseError(f"truncated header: need {hlen} bytes", len(data))
    try:
        header = json.loads(data[start : start + hlen].decode())
        shape = tuple(int(s) for s in header["shape"])
        noise_shape = tuple(int(s) for s in header["noise_shape"])
        partition = tuple(tuple(int(v) for v in p) for p in header["partition"])
        side = header["side"]
    except (ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"malformed header: {exc}", start) from None
    pos = start + hlen
    arrays = []
    for shp in (shape, noise_shape):
        nbytes = 16 * int(np.prod(shp))
        if len(data) < pos + nbytes:
            raise ParseError(f"truncated payload: need {nbytes} bytes", len(data))
        arrays.append(np.frombuffer(data, dtype="<c16", count=nbytes // 16, offset=pos).reshape(shp).astype(complex))
        pos += nbytes
    if pos != len(data):
        raise ParseError(f"{len(data) - pos} trailing bytes after payload", pos)
    return ChannelSet(
        matrices=arrays[0],
        partition=partition,
        noise=arrays[1],
        side=side,
        seed=header.get("seed"),
        scenario_hash=header.get("scenario_hash", ""),
    )
