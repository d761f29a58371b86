"""HTTP client shared by all remote backend roles.

Every call is ``POST {endpoint}`` with ``{"role": ..., "payload": {...}}``;
the service answers ``{"ok": true, "result": ...}`` or
``{"ok": false, "error": "..."}``.
"""
from __future__ import annotations

import json
import logging
import os
import threading
import time
import warnings

import httpx
import numpy as np

from ..blueprint import (
    ArtStyle,
    Blueprint,
    CharacterSheet,
    SceneSpec,
    ScriptConstraints,
    build_script_prompt,
    parse_blueprint,
)
from ..errors import (
    BackendError,
    BackendUnavailableError,
    BlueprintError,
    InvalidInputError,
    MalformedBackendOutputError,
    ScoreClampedWarning,
)
from ..media import Clip, Image, Mask
from .wire import clip_from_wire, image_from_wire, image_to_wire, mask_from_wire

log = logging.getLogger(__name__)

RETRY_STATUSES = frozenset({408, 425, 429, 500, 502, 503, 504})
RUBRIC_RANGES = {"consistency_0_10": (0.0, 10.0), "adherence_1_5": (1.0, 5.0)}


class _Malformed(Exception):
    def __init__(self, message, raw):
        super().__init__(message)
        self.raw = raw


def backoff_delays(max_retries: int, base: float) -> list[float]:
    """Sleep before retry k (0-based) is ``base * 2**k``; strictly increasing."""
    return [base * 2.0**k for k in range(max_retries)]


class RemoteBackend:
    kind = "remote"

    def __init__(self, config, transport: httpx.BaseTransport | None = None, sleep=time.sleep):
        self.config = config
        self.role = config.role
        self._sleep = sleep
        headers = {}
        if config.auth_env:
            token = os.environ.get(config.auth_env)
            if token:
                headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(timeout=config.timeout, transport=transport, headers=headers)
        self._slots = threading.BoundedSemaphore(config.max_in_flight)
        self.embed_dim = int((config.options or {}).get("embed_dim", 64))
        self.canvas = tuple((config.options or {}).get("canvas", (64, 64)))
        self.attempts = 0

    def close(self):
        self._client.close()

    def call(self, payload: dict, decode=lambda result: result):
        """POST ``payload``, retrying transient failures with exponential backoff.

        ``decode`` turns the ``result`` field into a value; if it raises
        ``_Malformed`` the attempt counts as failed and is retried.
        """
        delays = backoff_delays(self.config.max_retries, self.config.backoff_base)
        last_error = None
        malformed = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                self._sleep(delays[attempt - 1])
            self.attempts += 1
            try:
                with self._slots:
                    resp = self._client.post(
                        self.config.endpoint, json={"role": self.role, "payload": payload}
                    )
            except httpx.TransportError as exc:
                last_error = exc
                log.warning("%s attempt %d failed: %s", self.role, attempt + 1, exc)
                continue
            if resp.status_code in RETRY_STATUSES:
                last_error = BackendUnavailableError(f"HTTP {resp.status_code}")
                log.warning("%s attempt %d got HTTP %d", self.role, attempt + 1, resp.status_code)
                continue
            if resp.status_code >= 400:
                raise BackendError(f"{self.role}: HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                body = resp.json()
            except ValueError:
                malformed = _Malformed("response is not JSON", resp.text)
                continue
            if not isinstance(body, dict) or "ok" not in body:
                malformed = _Malformed("response lacks the 'ok' field", body)
                continue
            if not body["ok"]:
                raise BackendError(f"{self.role}: service error: {body.get('error', 'unspecified')}")
            try:
                return decode(body.get("result"))
            except _Malformed as exc:
                malformed = exc
                log.warning("%s attempt %d returned malformed output: %s", self.role, attempt + 1, exc)
        if malformed is not None and last_error is None:
            raise MalformedBackendOutputError(f"{self.role}: {malformed}", raw=malformed.raw)
        raise BackendUnavailableError(
            f"{self.role}: gave up after {self.config.max_retries + 1} attempts: {last_error}"
        )

    # scriptwriter --------------------------------------------------------

    def write_script(self, prompt: str, constraints: ScriptConstraints | None = None) -> Blueprint:
        if not prompt or not prompt.strip():
            raise InvalidInputError("prompt must be non-empty")

        def decode(result):
            doc = json.dumps(result) if isinstance(result, (dict, list)) else result
            if not isinstance(doc, str):
                raise _Malformed("scriptwriter result is neither text nor an object", result)
            try:
                return parse_blueprint(doc)
            except BlueprintError as exc:
                raise _Malformed(f"unusable blueprint: {exc}", result) from None

        instruction = build_script_prompt(prompt, constraints)
        return self.call({"task": "script", "prompt": instruction, "user_prompt": prompt}, decode)

    def bridge_answer(self, scene: SceneSpec, previous: SceneSpec) -> str:
        question = (
            "Does the next scene continue directly from the end of the previous one? "
            "Answer yes or no.\n"
            f"Previous scene: {previous.setting}. {previous.action}.\n"
            f"Next scene: {scene.setting}. {scene.action}."
        )

        def decode(result):
            if not isinstance(result, str):
                raise _Malformed("bridge answer must be text", result)
            return result

        return self.call({"task": "bridge", "prompt": question}, decode)

    # image generation ----------------------------------------------------

    def _image(self, result):
        try:
            return image_from_wire(result)
        except MalformedBackendOutputError as exc:
            raise _Malformed(str(exc), result) from None

    def synthesize_character(self, sheet: CharacterSheet, style: ArtStyle) -> Image:
        if not sheet.physical_description.strip():
            raise InvalidInputError(f"character {sheet.name!r} has no physical description")
        prompt = character_prompt(sheet, style)
        w, h = self.canvas
        return self.call({"prompt": prompt, "width": w, "height": h}, self._image)

    def synthesize_seed(self, scene: SceneSpec, style: ArtStyle, refs=(), prior=None, sheets=()) -> Image:
        if prior is not None and scene.index == 0:
            raise InvalidInputError("scene 0 has no preceding scene to bridge from")
        payload = {
            "prompt": scene_prompt(scene, style, sheets),
            "references": [
                {"name": r.character_name, "image": image_to_wire(r.canonical)} for r in refs
            ],
            "prior": image_to_wire(prior) if prior is not None else None,
        }
        return self.call(payload, self._image)

    def synthesize_clip(self, seed, scene: SceneSpec, style: ArtStyle, sheets=()) -> Clip:
        frame_count = max(1, int(round(scene.duration_seconds * 24)))

        def decode(result):
            try:
                clip = clip_from_wire(result, scene.index)
            except MalformedBackendOutputError as exc:
                raise _Malformed(str(exc), result) from None
            return clip

        payload = {
            "prompt": scene_prompt(scene, style, sheets),
            "action": scene.action,
            "seed": image_to_wire(seed) if seed is not None else None,
            "fps": 24,
            "frame_count": frame_count,
        }
        return self.call(payload, decode)

    # evaluation roles ----------------------------------------------------

    def judge_frames(self, frames, reference, rubric: str, context: str) -> float:
        frames = list(frames)
        if not frames:
            raise InvalidInputError("judge needs at least one frame")
        if rubric not in RUBRIC_RANGES:
            raise InvalidInputError(f"unknown rubric {rubric!r}")
        lo, hi = RUBRIC_RANGES[rubric]

        def decode(result):
            score = result.get("score") if isinstance(result, dict) else result
            if isinstance(score, bool) or not isinstance(score, (int, float)) or not np.isfinite(score):
                raise _Malformed("judge score is not a finite number", result)
            return float(score)

        payload = {
            "rubric": rubric,
            "context": context,
            "reference": image_to_wire(reference) if reference is not None else None,
            "frames": [image_to_wire(f) for f in frames],
        }
        score = self.call(payload, decode)
        if score < lo or score > hi:
            warnings.warn(f"judge score {score} clamped into [{lo}, {hi}]", ScoreClampedWarning, stacklevel=2)
        return min(max(score, lo), hi)

    def embed(self, image: Image, condition: str | None = None) -> np.ndarray:
        def decode(result):
            vec = result.get("vector") if isinstance(result, dict) else result
            try:
                arr = np.asarray(vec, dtype=np.float64)
            except (TypeError, ValueError):
                raise _Malformed("embedding is not numeric", result) from None
            if arr.shape != (self.embed_dim,):
                raise _Malformed(f"expected embedding of dimension {self.embed_dim}, got {arr.shape}", result)
            norm = np.linalg.norm(arr)
            if not np.isfinite(norm) or norm == 0:
                raise _Malformed("embedding has zero or non-finite norm", result)
            return arr / norm

        return self.call({"image": image_to_wire(image), "condition": condition}, decode)

    def segment(self, image: Image, target: str) -> Mask:
        if not target or not target.strip():
            raise InvalidInputError("segmentation target must be non-empty")

        def decode(result):
            try:
                mask = mask_from_wire(result)
            except MalformedBackendOutputError as exc:
                raise _Malformed(str(exc), result) from None
            if mask.bits.shape != image.shape:
                raise _Malformed("mask size does not match the image", result)
            return mask

        return self.call({"image": image_to_wire(image), "target": target}, decode)


def character_prompt(sheet: CharacterSheet, style: ArtStyle) -> str:
    parts = [sheet.physical_description, sheet.visual_notes, f"Art style: {style.aesthetic_name}"]
    if style.color_palette:
        parts.append("Palette: " + ", ".join(style.color_palette))
    if style.references:
        parts.append("References: " + ", ".join(style.references))
    return ". ".join(p.strip().rstrip(".") for p in parts if p.strip()) + "."


def scene_prompt(scene: SceneSpec, style: ArtStyle, sheets=()) -> str:
    lines = [
        f"Setting: {scene.setting}",
        f"Action: {scene.action}",
        f"Cinematography: {scene.visual_notes}",
        f"Tone: {scene.emotional_tone}",
        f"Art style: {style.aesthetic_name}",
    ]
    for s in sheets:
        lines.append(f"{s.name}: {s.physical_description}")
    return "\n".join(lines)

