"""3D spotlight estimation from street-light masks and metric depth.

Masked pixels are reprojected into world space across all frames, the
pooled point cloud is grouped into instances by union-find over a
proximity graph, and each cluster's emitter is localized at the
centroid of its highest points along the global up axis.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

# Distance threshold for merging observations into one instance.
DEFAULT_TAU_DIST = 0.5
APEX_FRACTION = 0.05

# Default cone/range parameters per emitter kind.
STREET_DEFAULTS = {"deg_inner": 15.0, "deg_outer": 35.0, "r_max": 15.0}
HEADLIGHT_DEFAULTS = {"deg_inner": 10.0, "deg_outer": 25.0, "r_max": 40.0}
DEFAULT_INTENSITY_RGB = (1.0, 0.9, 0.7)


@dataclass
class SpotLight:
    position: np.ndarray          # world, meters
    direction: np.ndarray         # unit vector
    cos_inner: float
    cos_outer: float
    r_max: float
    intensity: np.ndarray         # linear RGB radiant intensity
    kind: str = "street"

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        self.direction = np.asarray(self.direction, dtype=np.float64).reshape(3)
        norm = np.linalg.norm(self.direction)
        if abs(norm - 1.0) > 1e-6:
            if norm < 1e-12:
                raise ValueError("spotlight direction cannot be zero")
            self.direction = self.direction / norm
        if not self.cos_inner > self.cos_outer:
            raise ValueError(f"cos_inner ({self.cos_inner}) must exceed "
                             f"cos_outer ({self.cos_outer})")
        if self.r_max <= 0:
            raise ValueError("r_max must be positive")
        self.intensity = np.asarray(self.intensity, dtype=np.float64).reshape(3)
        if (self.intensity < 0).any():
            raise ValueError("intensity must be nonnegative")

    @classmethod
    def from_angles(cls, position, direction, deg_inner, deg_outer, r_max,
                    intensity, kind="street"):
        return cls(position=position, direction=direction,
                   cos_inner=math.cos(math.radians(deg_inner)),
                   cos_outer=math.cos(math.radians(deg_outer)),
                   r_max=r_max, intensity=intensity, kind=kind)


@dataclass
class LightCluster:
    points: np.ndarray            # (N, 3) world points
    instance_id: int = 0


class DisjointSet:
    """Union-find with path compression and union by rank."""

    def __init__(self, n: int):
        self.parent = np.arange(n, dtype=np.int64)
        self.rank = np.zeros(n, dtype=np.int64)

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1


def aggregate_light_points(frames, cameras):
    """Pool world-space points of every streetlight-masked pixel.

    Frames contribute in order, pixels in row-major order, so the result
    is deterministic.  Returns an (N, 3) array (possibly empty).
    """
    chunks = []
    for frame, cam in zip(frames, cameras):
        vs, us = np.nonzero(frame.streetlight_mask)
        if vs.size == 0:
            continue
        uv = np.stack([us, vs], axis=-1).astype(np.float64)
        pts_cam = cam.unproject(uv, frame.depth[vs, us])
        chunks.append(cam.camera_to_world(pts_cam))
    if not chunks:
        return np.empty((0, 3))
    return np.concatenate(chunks, axis=0)


def _grid_cells(points, cell):
    return np.floor(points / cell).astype(np.int64)


def cluster_dsu(points, tau_dist=DEFAULT_TAU_DIST):
    """Connected components of the graph with edges ||Xa - Xb|| < tau_dist.

    Candidate pairs come from a uniform spatial hash of cell size
    tau_dist (27-neighborhood), which is exact: any pair closer than
    tau_dist lands in adjacent cells.  Clusters are ordered by their
    lexicographically smallest member point.
    """
    if tau_dist <= 0:
        raise ValueError("tau_dist must be positive")
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = points.shape[0]
    if n == 0:
        return []

    cells = _grid_cells(points, tau_dist)
    buckets: dict[tuple, list] = {}
    for i, c in enumerate(map(tuple, cells)):
        buckets.setdefault(c, []).append(i)

    dsu = DisjointSet(n)
    tau_sq = tau_dist * tau_dist
    offsets = [(dx, dy, dz) for dx in (-1, 0, 1) for dy in (-1, 0, 1)
               for dz in (-1, 0, 1)]
    for (cx, cy, cz), members in buckets.items():
        mpts = points[members]
        for off in offsets:
            other = buckets.get((cx + off[0], cy + off[1], cz + off[2]))
            if other is None:
                continue
            opts = points[other]
            d2 = ((mpts[:, None, :] - opts[None, :, :]) ** 2).sum(axis=-1)
            ii, jj = np.nonzero(d2 < tau_sq)
            for a, b in zip(ii, jj):
                dsu.union(members[a], other[b])

    groups: dict[int, list] = {}
    for i in range(n):
        groups.setdefault(dsu.find(i), []).append(i)
    members_sorted = sorted(groups.values(),
                            key=lambda idx: tuple(points[idx[0]]))
    # Member index order within a group is ascending already; canonical
    # cluster order is by lexicographically smallest member point.
    clusters = []
    for k, idx in enumerate(sorted(members_sorted,
                                   key=lambda idx: min(map(tuple, points[idx])))):
        clusters.append(LightCluster(points=points[idx], instance_id=k))
    return clusters


def localize_emitter(cluster: LightCluster, up, defaults=None,
                     intensity=None, kind="street",
                     apex_fraction=APEX_FRACTION) -> SpotLight:
    """Emitter = centroid of the top ceil(f*|C|) points along the up axis.

    Points tied with the cutoff height are included, so an all-equal-
    height cluster degenerates to the full-cluster centroid.  Direction
    points down (-up) toward the road.
    """
    pts = np.asarray(cluster.points, dtype=np.float64).reshape(-1, 3)
    if pts.shape[0] == 0:
        raise ValueError("cannot localize an empty cluster")
    up = np.asarray(up, dtype=np.float64)
    up = up / np.linalg.norm(up)
    heights = pts @ up
    k = max(1, math.ceil(apex_fraction * pts.shape[0]))
    cutoff = np.sort(heights)[::-1][k - 1]
    apex = pts[heights >= cutoff]
    position = apex.mean(axis=0)

    params = dict(STREET_DEFAULTS if kind == "street" else HEADLIGHT_DEFAULTS)
    if defaults:
        params.update(defaults)
    rgb = DEFAULT_INTENSITY_RGB if intensity is None else intensity
    return SpotLight.from_angles(position=position, direction=-up,
                                 deg_inner=params["deg_inner"],
                                 deg_outer=params["deg_outer"],
                                 r_max=params["r_max"], intensity=rgb,
                                 kind=kind)


def estimate_streetlights(frames, cameras, up=(0.0, 1.0, 0.0),
                          tau_dist=DEFAULT_TAU_DIST, defaults=None,
                          intensity=None):
    """Full estimation pass: reproject, cluster, localize."""
    points = aggregate_light_points(frames, cameras)
    clusters = cluster_dsu(points, tau_dist=tau_dist)
    return [localize_emitter(c, up, defaults=defaults, intensity=intensity,
                             kind="street") for c in clusters]


def ego_headlights(cam, camera_height_m=1.5, bumper_height_m=0.7,
                   lateral_offset_m=0.75, forward_offset_m=2.0,
                   defaults=None, intensity=None):
    """Two spotlights mounted relative to the camera pose, facing forward.

    The mounting recipe (bumper height below the camera, symmetric
    lateral offsets) is config-driven plumbing, not an estimate.
    """
    drop = camera_height_m - bumper_height_m
    params = dict(HEADLIGHT_DEFAULTS)
    if defaults:
        params.update(defaults)
    rgb = DEFAULT_INTENSITY_RGB if intensity is None else intensity
    lights = []
    for side in (-1.0, 1.0):
        # camera space: +x right, +y down, +z forward
        offset_cam = np.array([side * lateral_offset_m, drop, forward_offset_m])
        pos = cam.camera_to_world(offset_cam)
        lights.append(SpotLight.from_angles(
            position=pos, direction=cam.forward,
            deg_inner=params["deg_inner"], deg_outer=params["deg_outer"],
            r_max=params["r_max"], intensity=rgb, kind="headlight"))
    return lights


# -- light rig JSON ---------------------------------------------------------

def rig_to_json(lights) -> list:
    out = []
    for li in lights:
        out.append({
            "p": [float(x) for x in li.position],
            "d": [float(x) for x in li.direction],
            "deg_inner": math.degrees(math.acos(min(1.0, li.cos_inner))),
            "deg_outer": math.degrees(math.acos(min(1.0, li.cos_outer))),
            "r_max": float(li.r_max),
            "E": [float(x) for x in li.intensity],
            "kind": li.kind,
        })
    return out


def rig_from_json(doc) -> list:
    lights = []
    for entry in doc:
        lights.append(SpotLight.from_angles(
            position=entry["p"], direction=entry["d"],
            deg_inner=entry["deg_inner"], deg_outer=entry["deg_outer"],
            r_max=entry["r_max"], intensity=entry["E"],
            kind=entry.get("kind", "street")))
    return lights


def save_rig(lights, path) -> None:
    with open(str(path), "w") as f:
        json.dump(rig_to_json(lights), f, indent=2)


def load_rig(path) -> list:
    with open(str(path)) as f:
        return rig_from_json(json.load(f))
