"""Homography tracking of the gel image and the corner-displacement strain metric.

Each frame is registered to the first frame with inverse-compositional
Gauss-Newton over a homography parameterized by the four patch corners.
The strain is the Euclidean norm of the four corner displacements, with
values under the deadband reported as exactly zero.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np
from PIL import Image
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .texture import FRAME_HEIGHT, FRAME_WIDTH

DEADBAND_PX = 3.0


class TrackingLost(RuntimeError):
    """Registration diverged; ``frame_index`` is set when known."""

    def __init__(self, message: str, frame_index: int | None = None):
        super().__init__(message if frame_index is None else f"frame {frame_index}: {message}")
        self.frame_index = frame_index


class UntrackableFrame(ValueError):
    pass


@dataclass(frozen=True)
class Frame:
    """Grayscale image, row-major, intensities in [0, 1]."""

    pixels: np.ndarray

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def ingest(image, width: int = FRAME_WIDTH, height: int = FRAME_HEIGHT) -> Frame:
    """Convert an image to a tracker frame: grayscale float32 in [0, 1], area-resized."""
    if isinstance(image, Frame):
        image = image.pixels
    img = np.asarray(image)
    if img.ndim == 3:
        img = img.astype(np.float32).mean(axis=2)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D grayscale image, got shape {img.shape}")
    if np.issubdtype(img.dtype, np.integer):
        img = img.astype(np.float32) / 255.0
    else:
        img = img.astype(np.float32)
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    if img.shape != (height, width):
        img = cv2.resize(img, (width, height), interpolation=cv2.INTER_AREA)
    return Frame(np.clip(img, 0.0, 1.0))


def homography_from_corners(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """3x3 matrix mapping the four ``src`` points onto ``dst`` (h33 = 1)."""
    A = np.zeros((8, 8))
    rhs = np.zeros(8)
    for i, ((x, y), (u, v)) in enumerate(zip(src, dst)):
        A[2 * i] = [x, y, 1, 0, 0, 0, -u * x, -u * y]
        A[2 * i + 1] = [0, 0, 0, x, y, 1, -v * x, -v * y]
        rhs[2 * i], rhs[2 * i + 1] = u, v
    h = np.linalg.solve(A, rhs)
    return np.append(h, 1.0).reshape(3, 3)


def apply_homography(H: np.ndarray, points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, float)
    den = H[2, 0] * pts[:, 0] + H[2, 1] * pts[:, 1] + H[2, 2]
    return np.stack([(H[0, 0] * pts[:, 0] + H[0, 1] * pts[:, 1] + H[0, 2]) / den,
                     (H[1, 0] * pts[:, 0] + H[1, 1] * pts[:, 1] + H[1, 2]) / den], axis=1)


def _signed_area(c: np.ndarray) -> float:
    x, y = c[:, 0], c[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def is_convex_same_orientation(corners: np.ndarray, reference: np.ndarray) -> bool:
    ref_sign = math.copysign(1.0, _signed_area(reference))
    for i in range(4):
        a, b, c = corners[i], corners[(i + 1) % 4], corners[(i + 2) % 4]
        cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
        if cross * ref_sign <= 0:
            return False
    return True


@dataclass(frozen=True)
class Homography:
    """Warp given by where the four patch corners currently sit."""

    corners: np.ndarray
    reference_corners: np.ndarray

    @property
    def matrix(self) -> np.ndarray:
        return homography_from_corners(self.reference_corners, self.corners)

    @property
    def displacements(self) -> np.ndarray:
        return self.corners - self.reference_corners

    @property
    def is_identity(self) -> bool:
        return bool(np.array_equal(self.corners, self.reference_corners))

    @property
    def is_valid(self) -> bool:
        return is_convex_same_orientation(self.corners, self.reference_corners)


def corner_strain(displacements) -> float:
    """Raw strain: sqrt of the summed squared corner displacements, in pixels."""
    d = np.asarray(displacements, float)
    return math.sqrt(float(np.sum(d * d)))


def apply_deadband(value: float, deadband: float = DEADBAND_PX) -> float:
    return 0.0 if value < deadband else value


def patch_corners(width: int, height: int, margin: float) -> np.ndarray:
    x0, x1 = margin * width, (1.0 - margin) * width
    y0, y1 = margin * height, (1.0 - margin) * height
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])


class StrainTracker(TransformerMixin, BaseEstimator):
    """Track a textured gel patch and report corner-displacement strain.

    ``fit`` takes the reference (first) frame; ``track`` registers each new
    frame warm-started from the previous warp; ``transform`` tracks a
    sequence and returns the reported strain per frame.

    Parameters
    ----------
    margin : float
        Patch inset from each frame edge as a fraction of the frame size.
    max_iter : int
        Gauss-Newton iterations per frame.
    eps : float
        Stop once the largest corner update is below this many pixels.
    deadband : float
        Raw strain below this is reported as 0.
    stride : int
        Use every ``stride``-th template pixel in each direction.
    """

    def __init__(self, margin: float = 0.1, max_iter: int = 50, eps: float = 0.03,
                 deadband: float = DEADBAND_PX, stride: int = 1):
        self.margin = margin
        self.max_iter = max_iter
        self.eps = eps
        self.deadband = deadband
        self.stride = stride

    def fit(self, X, y=None):
        frame = ingest(X[0] if isinstance(X, (list, tuple)) else X)
        ref = frame.pixels
        h, w = ref.shape
        corners = patch_corners(w, h, self.margin)
        xs = np.arange(math.ceil(corners[0, 0]), math.floor(corners[1, 0]) + 1, self.stride)
        ys = np.arange(math.ceil(corners[0, 1]), math.floor(corners[2, 1]) + 1, self.stride)
        gu, gv = np.meshgrid(xs.astype(float), ys.astype(float))
        gu, gv = gu.ravel(), gv.ravel()
        template = ref[gv.astype(int), gu.astype(int)].astype(float)
        if np.ptp(template) == 0.0:
            raise UntrackableFrame("reference patch has no intensity variation")
        dy, dx = np.gradient(ref.astype(float))
        gx = dx[gv.astype(int), gu.astype(int)]
        gy = dy[gv.astype(int), gu.astype(int)]

        # d(warp)/d(corner displacement) at identity, via the 8-parameter
        # matrix form in normalized coordinates
        center = corners.mean(axis=0)
        scale = 0.5 * float(np.max(corners.max(axis=0) - corners.min(axis=0)))
        nu, nv = (gu - center[0]) / scale, (gv - center[1]) / scale
        ncorners = (corners - center) / scale
        M = np.zeros((8, 8))
        for i, (cu, cv_) in enumerate(ncorners):
            M[2 * i] = [cu, cv_, 1, 0, 0, 0, -cu * cu, -cu * cv_]
            M[2 * i + 1] = [0, 0, 0, cu, cv_, 1, -cu * cv_, -cv_ * cv_]
        Minv = np.linalg.inv(M)
        zeros, ones = np.zeros_like(nu), np.ones_like(nu)
        dWu = np.stack([nu, nv, ones, zeros, zeros, zeros, -nu * nu, -nu * nv], axis=1) @ Minv
        dWv = np.stack([zeros, zeros, zeros, nu, nv, ones, -nu * nv, -nv * nv], axis=1) @ Minv
        sd = gx[:, None] * dWu + gy[:, None] * dWv  # per unit pixel displacement of corners

        self.reference_ = frame
        self.reference_corners_ = corners
        self.template_ = template
        self.grid_shape_ = (len(ys), len(xs))
        self.grid_ = (gu.reshape(self.grid_shape_).astype(np.float32),
                      gv.reshape(self.grid_shape_).astype(np.float32))
        self.steepest_ = sd
        self.hessian_ = sd.T @ sd
        if np.linalg.cond(self.hessian_) > 1e12:
            raise UntrackableFrame("reference patch gradients are degenerate")
        self.hessian_inv_ = np.linalg.inv(self.hessian_)
        self.warp_ = np.eye(3)
        self.corners_ = corners.copy()
        self.n_tracked_ = 0
        self.iterations_ = 0
        return self

    @property
    def homography_(self) -> Homography:
        return Homography(self.corners_.copy(), self.reference_corners_.copy())

    def _warp_grid(self, H: np.ndarray):
        gu, gv = self.grid_
        H = H.astype(np.float32)
        den = H[2, 0] * gu + H[2, 1] * gv + H[2, 2]
        wu = (H[0, 0] * gu + H[0, 1] * gv + H[0, 2]) / den
        wv = (H[1, 0] * gu + H[1, 1] * gv + H[1, 2]) / den
        return wu, wv

    def track(self, frame) -> Homography:
        """Register ``frame`` to the reference starting from the current warp."""
        check_is_fitted(self, "template_")
        img = ingest(frame).pixels
        if img.shape != self.reference_.pixels.shape:
            raise ValueError("frame size differs from the reference")
        h, w = img.shape
        ref_c = self.reference_corners_
        start = self.corners_
        H = self.warp_
        corners = start
        patch_width = float(ref_c[1, 0] - ref_c[0, 0])
        n_iter = 0
        for n_iter in range(1, self.max_iter + 1):
            wu, wv = self._warp_grid(H)
            warped = cv2.remap(img, wu, wv, cv2.INTER_LINEAR, borderMode=cv2.BORDER_CONSTANT,
                               borderValue=0.0).ravel().astype(float)
            valid = ((wu >= 0) & (wu <= w - 1) & (wv >= 0) & (wv <= h - 1)).ravel()
            err = warped - self.template_
            if valid.all():
                delta = self.hessian_inv_ @ (self.steepest_.T @ err)
            else:
                if valid.sum() < 0.25 * valid.size:
                    raise TrackingLost("patch left the frame")
                sd = self.steepest_[valid]
                delta = np.linalg.solve(sd.T @ sd, sd.T @ err[valid])
            dH = homography_from_corners(ref_c, ref_c + delta.reshape(4, 2))
            H = H @ np.linalg.inv(dH)
            H = H / H[2, 2]
            new_corners = apply_homography(H, ref_c)
            if not np.all(np.isfinite(new_corners)):
                raise TrackingLost("non-finite warp")
            step = float(np.max(np.abs(new_corners - corners)))
            corners = new_corners
            if step < self.eps:
                break
        if float(np.max(np.linalg.norm(corners - start, axis=1))) > patch_width:
            raise TrackingLost("corner jump larger than the patch width")
        if not is_convex_same_orientation(corners, ref_c):
            raise TrackingLost("corner ordering is no longer convex")
        self.warp_ = H
        self.corners_ = corners
        self.n_tracked_ += 1
        self.iterations_ = n_iter
        return self.homography_

    def raw_strain(self) -> float:
        check_is_fitted(self, "template_")
        if self.n_tracked_ == 0:
            return 0.0
        return corner_strain(self.corners_ - self.reference_corners_)

    def strain(self) -> float:
        return apply_deadband(self.raw_strain(), self.deadband)

    def transform(self, X):
        """Track each frame of ``X`` in order; returns reported strain per frame."""
        return np.array([self._track_strain(f) for f in X])

    def _track_strain(self, frame) -> float:
        self.track(frame)
        return self.strain()


def init_tracker(first_frame, **params) -> StrainTracker:
    return StrainTracker(**params).fit(first_frame)


def strain(tracker: StrainTracker) -> float:
    return tracker.strain()


def replay(frames, tracker: StrainTracker | None = None, with_raw: bool = False):
    """Initialize on the first frame and track the rest.

    Returns the reported strain series (length N-1), or ``(raw, reported)``
    when ``with_raw`` is set.
    """
    frames = list(frames)
    if not frames:
        raise ValueError("replay needs at least one frame")
    tracker = tracker if tracker is not None else StrainTracker()
    tracker.fit(frames[0])
    raw, reported = [], []
    for i, frame in enumerate(frames[1:], start=1):
        try:
            tracker.track(frame)
        except TrackingLost as exc:
            raise TrackingLost(str(exc), frame_index=i) from exc
        raw.append(tracker.raw_strain())
        reported.append(tracker.strain())
    if with_raw:
        return np.array(raw), np.array(reported)
    return np.array(reported)


def read_pgm(path) -> np.ndarray:
    """Read an 8-bit binary PGM (P5, maxval 255) as a uint8 array."""
    path = Path(path)
    with path.open("rb") as fh:
        magic = fh.read(2)
    if magic != b"P5":
        raise ValueError(f"{path}: not a binary PGM (magic {magic!r})")
    with Image.open(path) as im:
        if im.mode != "L":
            raise ValueError(f"{path}: expected 8-bit grayscale (maxval 255), got mode {im.mode}")
        return np.asarray(im, dtype=np.uint8).copy()


def write_pgm(path, pixels) -> None:
    arr = np.asarray(pixels)
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(np.asarray(arr, float) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(Path(path), format="PPM")


def load_frame_directory(directory) -> list[Frame]:
    directory = Path(directory)
    paths = sorted(directory.glob("*.pgm"), key=lambda p: (len(p.stem), p.stem))
    if not paths:
        raise FileNotFoundError(f"no .pgm frames in {directory}")
    return [ingest(read_pgm(p)) for p in paths]


def write_strain_csv(path, raw, reported) -> None:
    """CSV of frame_index, raw_strain_px, reported_strain_px; frame 0 is the reference."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame_index", "raw_strain_px", "reported_strain_px"])
        for i, (r, s) in enumerate(zip(raw, reported), start=1):
            writer.writerow([i, repr(float(r)), repr(float(s))])
