"""Deterministic synthetic dynamic scenes.

A scene is a textured relief backdrop of static surfels, a handful of rigid
spherical surfel clusters moving with piecewise-linear translations and
constant-rate rotations, and a parametric camera trajectory. Everything is a
pure function of ``SceneSpec``.
"""

from __future__ import annotations

import colorsys
import logging
from typing import Final

import numpy as np
from numpy.typing import NDArray

from corrtrack.geometry.camera import Camera, Intrinsics, look_at, unproject_points
from corrtrack.scenes.models import CameraPathKind, RigidObject, Scene, SceneSpec

LOG = logging.getLogger(__name__)

WALL_DEPTH: Final[float] = 4.0
WALL_RELIEF: Final[float] = 0.5
BACKDROP_MARGIN: Final[float] = 0.08
OBJECT_RADIUS: Final[tuple[float, float]] = (0.12, 0.25)
OBJECT_DEPTH: Final[tuple[float, float]] = (1.8, 3.0)
OBJECT_DEPTH_BOUNDS: Final[tuple[float, float]] = (1.5, 3.3)
MIN_OBJECT_SURFELS: Final[int] = 24


def scene_intrinsics(spec: SceneSpec) -> Intrinsics:
    """Ground-truth intrinsics shared by every frame of a scene."""
    focal = spec.focal_scale * spec.width
    return Intrinsics(
        fx=focal,
        fy=focal,
        cx=spec.width / 2.0,
        cy=spec.height / 2.0,
        width=spec.width,
        height=spec.height,
    )


def make_palette(size: int) -> NDArray[np.float64]:
    """High-contrast palette: evenly spaced hues, alternating brightness."""
    colors = []
    for k in range(size):
        hue = k / size
        saturation = 0.9 if k % 2 == 0 else 0.6
        value = 0.95 if k % 3 != 2 else 0.55
        colors.append(colorsys.hsv_to_rgb(hue, saturation, value))
    return np.array(colors, dtype=np.float64)


def rotation_about(axis: NDArray[np.float64], angle: float) -> NDArray[np.float64]:
    """Rodrigues rotation matrix."""
    axis = axis / np.linalg.norm(axis)
    x, y, z = axis
    skew = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + np.sin(angle) * skew + (1.0 - np.cos(angle)) * (skew @ skew)


def random_rotation(rng: np.random.Generator) -> NDArray[np.float64]:
    """Uniformly random proper rotation via QR."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def fibonacci_sphere(count: int, radius: float) -> NDArray[np.float64]:
    """Evenly spread points on a sphere surface."""
    k = np.arange(count, dtype=np.float64) + 0.5
    polar = np.arccos(1.0 - 2.0 * k / count)
    azimuth = np.pi * (1.0 + 5.0**0.5) * k
    return radius * np.stack(
        [np.cos(azimuth) * np.sin(polar), np.sin(azimuth) * np.sin(polar), np.cos(polar)],
        axis=-1,
    )


def _jittered(
    base: NDArray[np.float64], jitter: float, rng: np.random.Generator
) -> NDArray[np.float64]:
    noise = rng.uniform(-jitter, jitter, size=base.shape)
    return np.clip(base + noise, 0.0, 1.0)


def _build_backdrop(
    spec: SceneSpec,
    reference: Camera,
    palette: NDArray[np.float64],
    rng: np.random.Generator,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    width, height = spec.resolution
    ext_w = width * (1.0 + 2.0 * BACKDROP_MARGIN)
    ext_h = height * (1.0 + 2.0 * BACKDROP_MARGIN)
    cols = max(2, int(round(np.sqrt(spec.num_static_points * ext_w / ext_h))))
    rows = max(2, int(round(spec.num_static_points / cols)))

    u = np.linspace(-BACKDROP_MARGIN * width, width * (1 + BACKDROP_MARGIN), cols)
    v = np.linspace(-BACKDROP_MARGIN * height, height * (1 + BACKDROP_MARGIN), rows)
    grid_u, grid_v = np.meshgrid(u, v)
    pixels = np.stack([grid_u.ravel(), grid_v.ravel()], axis=-1)

    freq = rng.uniform(0.5, 1.5, size=2)
    phase = rng.uniform(0.0, 1.0, size=2)
    depth = WALL_DEPTH + WALL_RELIEF * (
        np.sin(2 * np.pi * (freq[0] * pixels[:, 0] / width + phase[0]))
        * np.cos(2 * np.pi * (freq[1] * pixels[:, 1] / height + phase[1]))
    )
    points = unproject_points(pixels, depth, reference)

    # Texture: coarse cells of a single palette color, per-surfel jitter
    cell = int(rng.integers(3, 6))
    col_idx = np.repeat(np.arange(cols)[None, :], rows, axis=0).ravel() // cell
    row_idx = np.repeat(np.arange(rows)[:, None], cols, axis=1).ravel() // cell
    cell_colors = rng.integers(0, len(palette), size=(row_idx.max() + 1, col_idx.max() + 1))
    colors = _jittered(palette[cell_colors[row_idx, col_idx]], spec.color_jitter, rng)
    return points, colors


def _object_trajectory(
    start: NDArray[np.float64],
    speed: float,
    num_frames: int,
    bounds: tuple[NDArray[np.float64], NDArray[np.float64]],
    rng: np.random.Generator,
) -> NDArray[np.float64]:
    """Piecewise-linear path, new heading every segment, reflected at the bounds."""
    lo, hi = bounds
    segment = max(4, num_frames // 4)
    positions = np.empty((num_frames, 3))
    position = start.copy()
    velocity = np.zeros(3)
    for t in range(num_frames):
        if t % segment == 0:
            heading = rng.normal(size=3) * np.array([1.0, 1.0, 0.3])
            velocity = speed * heading / np.linalg.norm(heading)
        positions[t] = position
        position = position + velocity
        for axis in range(3):
            if position[axis] > hi[axis]:
                position[axis] = 2 * hi[axis] - position[axis]
                velocity[axis] = -velocity[axis]
            elif position[axis] < lo[axis]:
                position[axis] = 2 * lo[axis] - position[axis]
                velocity[axis] = -velocity[axis]
    return positions


def _build_object(
    spec: SceneSpec,
    reference: Camera,
    palette: NDArray[np.float64],
    rng: np.random.Generator,
) -> RigidObject:
    width, height = spec.resolution
    radius = rng.uniform(*OBJECT_RADIUS)
    depth = rng.uniform(*OBJECT_DEPTH)
    pixel = np.array(
        [[rng.uniform(0.15, 0.85) * width, rng.uniform(0.15, 0.85) * height]]
    )
    start = unproject_points(pixel, np.array([depth]), reference)[0]

    # Reason: roughly one surfel per covered pixel on the front hemisphere
    apparent_radius = radius * reference.fx / depth
    count = max(MIN_OBJECT_SURFELS, int(round(2.0 * np.pi * apparent_radius**2)))
    local = fibonacci_sphere(count, radius)

    base = rng.integers(0, len(palette), size=2)
    bands = np.floor((local[:, 2] / radius + 1.0) * 2.0).astype(int) % 2
    colors = _jittered(palette[base[bands]], spec.color_jitter, rng)

    half_x = 0.4 * width / reference.fx * depth
    half_y = 0.4 * height / reference.fy * depth
    bounds = (
        np.array([-half_x, -half_y, OBJECT_DEPTH_BOUNDS[0]]),
        np.array([half_x, half_y, OBJECT_DEPTH_BOUNDS[1]]),
    )
    speed = rng.uniform(*spec.object_speed_range)
    translations = _object_trajectory(start, speed, spec.num_frames, bounds, rng)

    axis = rng.normal(size=3)
    angular_rate = rng.uniform(0.0, 1.0) * speed / radius
    initial = random_rotation(rng)
    rotations = np.stack(
        [rotation_about(axis, angular_rate * t) @ initial for t in range(spec.num_frames)]
    )
    return RigidObject(
        local_points=local, colors=colors, rotations=rotations, translations=translations
    )


def camera_path(spec: SceneSpec, intrinsics: Intrinsics) -> list[Camera]:
    """Per-frame cameras for the scene's camera path kind."""
    target = np.array([0.0, 0.0, WALL_DEPTH])
    amplitude = spec.camera_amplitude
    cameras = []
    for t in range(spec.num_frames):
        phase = 2.0 * np.pi * t / (spec.num_frames - 1)
        if spec.camera_path is CameraPathKind.STATIC:
            eye = np.zeros(3)
        elif spec.camera_path is CameraPathKind.PAN:
            eye = np.array([amplitude * np.sin(phase), 0.0, 0.0])
        elif spec.camera_path is CameraPathKind.ORBIT:
            eye = np.array(
                [amplitude * np.sin(phase), -0.5 * amplitude * (1.0 - np.cos(phase)), 0.0]
            )
        else:
            eye = np.array([0.0, 0.0, amplitude * t / (spec.num_frames - 1)])

        if spec.camera_path is CameraPathKind.DOLLY:
            rotation, translation = np.eye(3), -eye
        else:
            rotation, translation = look_at(eye, target)
        cameras.append(Camera.from_intrinsics(intrinsics, rotation, translation))
    return cameras


def generate_scene(spec: SceneSpec) -> Scene:
    """Build the scene described by ``spec``.

    Args:
        spec: Scene recipe

    Returns:
        Scene; identical specs give bit-identical scenes
    """
    rng = np.random.default_rng(spec.seed)
    intrinsics = scene_intrinsics(spec)
    reference = Camera.from_intrinsics(intrinsics)
    palette = make_palette(spec.palette_size)

    static_points, static_colors = _build_backdrop(spec, reference, palette, rng)
    objects = [_build_object(spec, reference, palette, rng) for _ in range(spec.num_objects)]
    cameras = camera_path(spec, intrinsics)

    scene = Scene(
        spec=spec,
        static_points=static_points,
        static_colors=static_colors,
        objects=objects,
        cameras=cameras,
    )
    LOG.debug(
        "Generated scene seed=%d: %d static surfels, %d objects, %d frames",
        spec.seed,
        scene.num_static,
        len(objects),
        scene.num_frames,
    )
    return scene
