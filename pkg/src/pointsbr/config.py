"""Run configuration: one flat dataclass, serialized as ASCII key=value so
runs stay diffable and reproducible.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .em import C0
from .errors import FileFormatError

# view set used for multi-view fusion: two rings of four azimuths
FUSION_VIEWS_DEFAULT = ((60.0, 45.0), (60.0, 135.0), (60.0, 225.0), (60.0, 315.0),
                        (120.0, 45.0), (120.0, 135.0), (120.0, 225.0), (120.0, 315.0))


@dataclass
class SweepConfig:
    frequency: float = 5e8          # Hz
    pol: str = "theta"              # incident E along theta_hat or phi_hat
    pitch_factor: float = 0.1       # ray spacing as a fraction of wavelength
    k_top: int = 8                  # tube candidates kept per pixel
    rel_radius: float = 2.0         # tube radius in pitches
    max_bounce: int = 3
    blend_factor: float = 1.0       # re-test sphere radius in splat radii
    fusion_resolution: int = 256
    fusion_views: tuple = FUSION_VIEWS_DEFAULT
    backend: str = "classical"      # or "external"
    backend_exe: str = ""
    seed: int = 0
    sample_count: int = 50000
    target_extent: float = 0.0      # normalize longest bbox edge; 0 = keep
    sweep_axis: str = "phi"
    fixed_angle: float = 60.0       # the non-swept spherical angle, degrees
    sweep_start: float = 0.0
    sweep_stop: float = 360.0
    sweep_step: float = 1.0

    @property
    def wavelength(self) -> float:
        return C0 / self.frequency

    @property
    def pitch(self) -> float:
        return self.pitch_factor * self.wavelength

    @property
    def secondary_ray_offset(self) -> float:
        """Minimum travel distance between splat bounces."""
        return 2.0 * self.pitch

    def validate(self) -> "SweepConfig":
        if self.frequency <= 0 or self.pitch_factor <= 0:
            raise ValueError("frequency and pitch_factor must be positive")
        if self.pol not in ("theta", "phi"):
            raise ValueError("pol must be 'theta' or 'phi'")
        if self.k_top < 1 or self.max_bounce < 1:
            raise ValueError("k_top and max_bounce must be >= 1")
        if self.rel_radius <= 0 or self.blend_factor <= 0:
            raise ValueError("rel_radius and blend_factor must be positive")
        if self.fusion_resolution < 1:
            raise ValueError("fusion_resolution must be >= 1")
        if self.sweep_axis not in ("phi", "theta"):
            raise ValueError("sweep_axis must be 'phi' or 'theta'")
        if self.sweep_step <= 0:
            raise ValueError("sweep_step must be positive")
        span = self.sweep_stop - self.sweep_start
        if span <= 0:
            raise ValueError("sweep_stop must exceed sweep_start")
        steps = span / self.sweep_step
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("sweep_step must divide the sweep range")
        return self

    def sweep_angles(self) -> list[tuple[float, float]]:
        """(theta, phi) pairs of the sweep, end point excluded."""
        self.validate()
        n = int(round((self.sweep_stop - self.sweep_start) / self.sweep_step))
        out = []
        for k in range(n):
            a = self.sweep_start + k * self.sweep_step
            if self.sweep_axis == "phi":
                out.append((self.fixed_angle, a))
            else:
                out.append((a, self.fixed_angle))
        return out

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            val = getattr(self, f.name)
            if f.name == "fusion_views":
                val = ",".join(f"{t:g}:{p:g}" for t, p in val)
            lines.append(f"{f.name}={val}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "SweepConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for ln, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FileFormatError(f"{source}:{ln}: expected key=value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in known:
                raise FileFormatError(f"{source}:{ln}: unknown key '{key}'")
            kwargs[key] = _parse_value(known[key], val, f"{source}:{ln}")
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "SweepConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_text(fh.read(), str(path))


def with_overrides(cfg: SweepConfig, pairs) -> SweepConfig:
    """Apply ``key=value`` override strings on top of an existing config."""
    known = {f.name: f for f in dataclasses.fields(SweepConfig)}
    updates = {}
    for raw in pairs:
        if "=" not in raw:
            raise FileFormatError(f"override '{raw}': expected key=value")
        key, val = (s.strip() for s in raw.split("=", 1))
        if key not in known:
            raise FileFormatError(f"override: unknown key '{key}'")
        updates[key] = _parse_value(known[key], val, f"override {key}")
    return dataclasses.replace(cfg, **updates)


def _parse_value(fld, val: str, where: str):
    if fld.name == "fusion_views":
        views = []
        for part in val.split(","):
            part = part.strip()
            if not part:
                continue
            try:
                t, p = part.split(":")
                views.append((float(t), float(p)))
            except ValueError as exc:
                raise FileFormatError(f"{where}: bad view '{part}', want theta:phi") from exc
        if not views:
            raise FileFormatError(f"{where}: fusion_views must not be empty")
        return tuple(views)
    try:
        if fld.type == "int":
            return int(val)
        if fld.type == "float":
            return float(val)
    except ValueError as exc:
        raise FileFormatError(f"{where}: bad value '{val}' for {fld.name}") from exc
    return val
