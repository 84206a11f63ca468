"""Forward simulator of a markerless gel sensor.

Presses parametric indenters into a (flat or gently curved) gel surface,
renders the deformed surface under three colored directional lights, and
assigns ground-truth normal forces via shape-specific indentation laws.
Everything is pure and seed-deterministic, so the simulator doubles as the
oracle for calibration, reconstruction, and force-regression experiments.

Geometry conventions: lengths are in pixels of the render grid, the height
field h(x, y) >= 0 is the gel deformation toward the camera, and visible
surface normals are unit vectors with n_z > 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .fields import DepthMap
from .image import Image

_WALL_SLOPE = 8.0  # steep-but-finite side walls keep penetration C0


class SceneError(ValueError):
    """Raised for presses that leave the frame or degenerate scenes."""


# ---------------------------------------------------------------------------
# indenters


@dataclass(frozen=True)
class Indenter:
    """Rigid press object. `size` holds shape-specific parameters:

    sphere:     {radius}
    box:        {half_x, half_y, fillet}
    cylinder:   {radius, fillet}
    cone:       {slope, apex_smooth, max_radius}
    star_prism: {points, r_outer, r_inner, fillet}
    """

    shape: str
    size: dict
    id: str

    def __post_init__(self):
        if self.shape not in ("sphere", "box", "cylinder", "cone", "star_prism"):
            raise SceneError(f"unknown indenter shape {self.shape!r}")
        if any(v <= 0 for v in self.size.values()):
            raise SceneError(f"indenter {self.id}: sizes must be positive")

    def profile(self, dx: np.ndarray, dy: np.ndarray) -> np.ndarray:
        """Height of the lower surface above its lowest point at offsets (dx, dy)."""
        if self.shape == "sphere":
            r = np.hypot(dx, dy)
            rad = self.size["radius"]
            inside = np.sqrt(np.maximum(rad * rad - np.minimum(r, rad) ** 2, 0.0))
            p = rad - inside
            return np.where(r <= rad, p, rad + (r - rad) * _WALL_SLOPE)
        if self.shape == "cylinder":
            dout = np.maximum(np.hypot(dx, dy) - (self.size["radius"] - self.size["fillet"]), 0.0)
            return _fillet_profile(dout, self.size["fillet"])
        if self.shape == "box":
            hx, hy, f = self.size["half_x"], self.size["half_y"], self.size["fillet"]
            qx = np.maximum(np.abs(dx) - (hx - f), 0.0)
            qy = np.maximum(np.abs(dy) - (hy - f), 0.0)
            return _fillet_profile(np.hypot(qx, qy), f)
        if self.shape == "cone":
            s, a = self.size["slope"], self.size["apex_smooth"]
            r = np.hypot(dx, dy)
            p = s * (np.sqrt(r * r + a * a) - a)
            rmax = self.size["max_radius"]
            wall = s * (np.sqrt(rmax * rmax + a * a) - a) + (r - rmax) * _WALL_SLOPE
            return np.where(r <= rmax, p, wall)
        # star_prism
        f = self.size["fillet"]
        rho = _star_radius(np.arctan2(dy, dx), int(self.size["points"]),
                           self.size["r_outer"], self.size["r_inner"])
        dout = np.maximum(np.hypot(dx, dy) - (rho - f), 0.0)
        return _fillet_profile(dout, f)

    def footprint_radius(self) -> float:
        if self.shape == "sphere":
            return self.size["radius"]
        if self.shape == "cylinder":
            return self.size["radius"]
        if self.shape == "box":
            return math.hypot(self.size["half_x"], self.size["half_y"])
        if self.shape == "cone":
            return self.size["max_radius"]
        return self.size["r_outer"]


def _fillet_profile(dout: np.ndarray, f: float) -> np.ndarray:
    """Quarter-round edge profile continuing into a steep side wall."""
    inside = dout <= f
    p_round = f - np.sqrt(np.maximum(f * f - np.minimum(dout, f) ** 2, 0.0))
    return np.where(inside, p_round, f + (dout - f) * _WALL_SLOPE)


def _star_radius(theta: np.ndarray, points: int, r_outer: float, r_inner: float) -> np.ndarray:
    """Boundary radius of a 2*points-vertex star polygon at angles theta."""
    sector = np.pi / points
    t = np.mod(theta, 2 * sector)
    # edge from (r_outer, 0) to (r_inner, sector), mirrored on [sector, 2*sector)
    t = np.where(t > sector, 2 * sector - t, t)
    num = r_outer * r_inner * np.sin(sector)
    den = r_inner * np.sin(sector - t) + r_outer * np.sin(t)
    return num / den


# ---------------------------------------------------------------------------
# scenes and deformation


@dataclass(frozen=True)
class PressScene:
    indenter: Indenter
    center_px: tuple[float, float]  # (x, y)
    press_depth_px: float
    curvature_radius: float | None = None  # cylindrical gel bulge; None = flat
    saturation_px: float | None = None  # deformation ceiling

    def __post_init__(self):
        if self.press_depth_px < 0:
            raise SceneError("press depth must be >= 0")


def _rest_surface(h: int, w: int, curvature_radius: float | None) -> np.ndarray:
    """Rest elevation of the gel toward the camera (0 at the long edges)."""
    if curvature_radius is None:
        return np.zeros((h, w))
    cy = (h - 1) / 2.0
    y = np.arange(h, dtype=np.float64) - cy
    rg = float(curvature_radius)
    if rg <= cy:
        raise SceneError("curvature radius must exceed half the frame height")
    s = np.sqrt(rg * rg - y * y) - np.sqrt(rg * rg - cy * cy)
    return np.repeat(s[:, None], w, axis=1)


def press_depth_map(scene: PressScene, grid: tuple[int, int]) -> DepthMap:
    """Penetration of the indenter into the gel on a (width, height) grid."""
    w, h = grid
    xs = np.arange(w, dtype=np.float64)
    ys = np.arange(h, dtype=np.float64)
    dx, dy = np.meshgrid(xs - scene.center_px[0], ys - scene.center_px[1])
    p = scene.indenter.profile(dx, dy)
    s = _rest_surface(h, w, scene.curvature_radius)
    cx, cy = int(round(scene.center_px[0])), int(round(scene.center_px[1]))
    if not (0 <= cx < w and 0 <= cy < h):
        raise SceneError(f"press centre {scene.center_px} outside {w}x{h} frame")
    depth = np.maximum(scene.press_depth_px - p + (s - s[cy, cx]), 0.0)
    if scene.saturation_px is not None:
        depth = np.minimum(depth, scene.saturation_px)
    border = np.concatenate([depth[0], depth[-1], depth[:, 0], depth[:, -1]])
    if (border > 0).any():
        raise SceneError(f"contact region of {scene.indenter.id} leaves the frame")
    return DepthMap(depth)


def surface_normals_from_depth(h: np.ndarray) -> np.ndarray:
    """Camera-facing unit normals from central-difference gradients of h."""
    hy, hx = np.gradient(h.astype(np.float64))
    n = np.stack([-hx, -hy, np.ones_like(hx)], axis=-1)
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    return n


# ---------------------------------------------------------------------------
# lighting and rendering


@dataclass(frozen=True)
class LightingModel:
    """Three directional lights with RGB intensities plus an ambient term."""

    directions: np.ndarray  # (3, 3) unit vectors toward each light
    colors: np.ndarray  # (3, 3) RGB intensity per light
    ambient: np.ndarray  # (3,)

    def __post_init__(self):
        d = np.asarray(self.directions, dtype=np.float64)
        c = np.asarray(self.colors, dtype=np.float64)
        a = np.asarray(self.ambient, dtype=np.float64)
        if d.shape != (3, 3) or c.shape != (3, 3) or a.shape != (3,):
            raise ValueError("lighting model needs 3 directions, 3 colors, 1 ambient triple")
        norms = np.linalg.norm(d, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-9):
            raise ValueError("light directions must be unit vectors")
        object.__setattr__(self, "directions", d)
        object.__setattr__(self, "colors", c)
        object.__setattr__(self, "ambient", a)


def default_lighting() -> LightingModel:
    """R/G/B lights at azimuths 0/120/240 deg, elevation 45 deg."""
    elev = np.deg2rad(45.0)
    dirs = []
    for az_deg in (0.0, 120.0, 240.0):
        az = np.deg2rad(az_deg)
        dirs.append([np.cos(elev) * np.cos(az), np.cos(elev) * np.sin(az), np.sin(elev)])
    colors = np.array([[0.42, 0.06, 0.06],
                       [0.06, 0.42, 0.06],
                       [0.06, 0.06, 0.42]])
    return LightingModel(np.array(dirs), colors, np.array([0.16, 0.16, 0.16]))


def render_tactile(h: DepthMap, lights: LightingModel) -> Image:
    """Lambertian shading of the deformed surface; deterministic and clamped to [0, 1]."""
    n = surface_normals_from_depth(h.h)
    img = np.broadcast_to(lights.ambient, (h.height, h.width, 3)).copy()
    for d, c in zip(lights.directions, lights.colors):
        lam = np.maximum(n @ d, 0.0)
        img += lam[:, :, None] * c
    return Image(np.clip(img, 0.0, 1.0).astype(np.float32))


def render_scene(scene: PressScene, grid: tuple[int, int],
                 lights: LightingModel | None = None) -> tuple[Image, DepthMap]:
    lights = lights or default_lighting()
    dm = press_depth_map(scene, grid)
    return render_tactile(dm, lights), dm


def add_pixel_noise(img: Image, sigma: float, rng: np.random.Generator) -> Image:
    if sigma <= 0:
        return img
    noisy = img.data + rng.normal(0.0, sigma, size=img.data.shape).astype(np.float32)
    return Image(np.clip(noisy, 0.0, 1.0))


# ---------------------------------------------------------------------------
# contact forces

_SPHERE_K = 0.45  # per sqrt(radius_px), Hertzian 3/2-power law
_AREA_K = 0.0108  # per px^2 of flat face, linear law
_CONE_K = 0.55  # per unit tan(opening), quadratic law
_STAR_K = 0.012  # per r_outer^2, quadratic law


def force_law(ind: Indenter) -> tuple[float, float]:
    """(coefficient, exponent) of F = k * depth**e for this indenter."""
    if ind.shape == "sphere":
        return _SPHERE_K * math.sqrt(ind.size["radius"]), 1.5
    if ind.shape == "box":
        area = 4.0 * ind.size["half_x"] * ind.size["half_y"]
        return _AREA_K * area, 1.0
    if ind.shape == "cylinder":
        area = math.pi * ind.size["radius"] ** 2
        return _AREA_K * area, 1.0
    if ind.shape == "cone":
        return _CONE_K / ind.size["slope"], 2.0
    return _STAR_K * ind.size["r_outer"] ** 2, 2.0


def contact_force(scene: PressScene) -> float:
    """Normal force in newtons for the scene's indentation depth."""
    k, e = force_law(scene.indenter)
    return k * scene.press_depth_px ** e


def depth_for_force(ind: Indenter, force_n: float) -> float:
    """Inverse of the indenter's force law."""
    k, e = force_law(ind)
    return (force_n / k) ** (1.0 / e)


# ---------------------------------------------------------------------------
# indenter library and dataset generation


def default_indenters(scales: tuple[float, ...] = (1.0, 1.4)) -> list[Indenter]:
    """Nine base geometries at each scale: 18 indenters by default."""
    base = [
        ("sphere", {"radius": 9.0}),
        ("sphere", {"radius": 13.0}),
        ("box", {"half_x": 9.0, "half_y": 7.0, "fillet": 2.5}),
        ("box", {"half_x": 6.0, "half_y": 6.0, "fillet": 2.5}),
        ("cylinder", {"radius": 8.0, "fillet": 2.5}),
        ("cylinder", {"radius": 11.0, "fillet": 2.5}),
        ("cone", {"slope": 0.35, "apex_smooth": 1.5, "max_radius": 12.0}),
        ("star_prism", {"points": 5, "r_outer": 12.0, "r_inner": 6.0, "fillet": 2.0}),
        ("star_prism", {"points": 6, "r_outer": 10.0, "r_inner": 6.5, "fillet": 2.0}),
    ]
    out = []
    for si, sc in enumerate(scales):
        for bi, (shape, size) in enumerate(base):
            sized = {k: (v if k == "points" else v * sc) for k, v in size.items()}
            if shape == "cone":
                sized["slope"] = size["slope"]  # opening angle is scale-free
            out.append(Indenter(shape, sized, id=f"{shape}{bi:02d}_s{si}"))
    return out


def press_grid(grid: tuple[int, int], margin: float, nx: int = 3, ny: int = 3) -> list[tuple[float, float]]:
    """Fixed grid of press points inset from the frame borders."""
    w, h = grid
    xs = np.linspace(margin, w - 1 - margin, nx)
    ys = np.linspace(margin, h - 1 - margin, ny)
    return [(float(x), float(y)) for y in ys for x in xs]


@dataclass(frozen=True)
class SynthSample:
    frame: Image
    depth: DepthMap
    force_n: float
    indenter_id: str
    scene: PressScene
    timestamp_s: float


@dataclass(frozen=True)
class DatasetSpec:
    indenters: list[Indenter] = field(default_factory=default_indenters)
    grid: tuple[int, int] = (160, 120)
    locations_per_indenter: int = 9
    samples_per_location: int = 81
    force_min: float = 1.0
    force_max: float = 15.0
    noise_sigma: float = 0.01
    curvature_radius: float | None = None
    saturation_px: float | None = None
    lights: LightingModel = field(default_factory=default_lighting)

    def __post_init__(self):
        if not self.indenters:
            raise SceneError("dataset spec needs at least one indenter")
        if self.locations_per_indenter < 1 or self.samples_per_location < 1:
            raise SceneError("dataset spec counts must be >= 1")


def reference_frame(spec: DatasetSpec) -> Image:
    """Noise-free rendering of the undeformed gel."""
    w, h = spec.grid
    rest = np.zeros((h, w))
    if spec.curvature_radius is not None:
        rest = _rest_surface(h, w, spec.curvature_radius)
    return render_tactile(DepthMap(rest), spec.lights)


def generate_dataset(spec: DatasetSpec, seed: int, sink=None) -> list[SynthSample]:
    """Render (frame, true depth, force) triplets for every indenter.

    `sink(sample)` is called per sample when given (for streaming to disk);
    otherwise all samples are accumulated and returned. Output order and
    content are fully determined by `seed`.
    """
    rng = np.random.default_rng(seed)
    margin = max(i.footprint_radius() for i in spec.indenters) + 6.0
    grid_pts = press_grid(spec.grid, margin)
    if spec.locations_per_indenter > len(grid_pts):
        raise SceneError(f"at most {len(grid_pts)} press locations available")

    samples = []
    idx = 0
    for ind in spec.indenters:
        loc_ids = rng.permutation(len(grid_pts))[: spec.locations_per_indenter]
        for li in loc_ids:
            forces = rng.uniform(spec.force_min, spec.force_max,
                                 size=spec.samples_per_location)
            for f_target in forces:
                d = depth_for_force(ind, float(f_target))
                scene = PressScene(ind, grid_pts[li], d,
                                   curvature_radius=spec.curvature_radius,
                                   saturation_px=spec.saturation_px)
                frame, dm = render_scene(scene, spec.grid, spec.lights)
                frame = add_pixel_noise(frame, spec.noise_sigma, rng)
                sample = SynthSample(frame=frame, depth=dm,
                                     force_n=contact_force(scene),
                                     indenter_id=ind.id, scene=scene,
                                     timestamp_s=idx / 60.0)
                idx += 1
                if sink is not None:
                    sink(sample)
                else:
                    samples.append(sample)
    return samples
