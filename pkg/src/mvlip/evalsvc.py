"""HTTP service backing the pairwise human-verification study.

Raters compare side-by-side clips under three conditions (M: attention-
compressed, O: original, V: uniformly degraded) plus an O-O confusion
control, and answer 4-option phrase-identification tasks. Judgments are
persisted to an append-only JSON-lines journal and replayed on startup, so
results survive process restarts byte-for-byte.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel

PAIR_TYPES = ("M-O", "V-O", "M-V", "O-O")
CHOICES = ("left", "right", "same")


class JudgmentIn(BaseModel):
    """POST /judgments payload."""

    study_id: str
    session: str
    task_id: str
    response: str
    playback_complete: bool = False


class StudyError(ValueError):
    """Invalid study configuration or request payload."""


class ConflictError(StudyError):
    """A different judgment already exists for this (session, task)."""


@dataclass
class PhraseSpec:
    """One study phrase: its three media renditions and the 4-option quiz."""

    phrase_id: str
    text: str
    media: Dict[str, str]  # condition "O"|"M"|"V" -> media URL
    options: List[str]  # exactly 4; one correct, one similar, two different
    correct_index: int

    def validate(self):
        missing = [c for c in ("O", "M", "V") if c not in self.media]
        if missing:
            raise StudyError(f"phrase {self.phrase_id}: missing media for {missing}")
        if len(self.options) != 4:
            raise StudyError(f"phrase {self.phrase_id}: need exactly 4 options")
        if not 0 <= self.correct_index < 4:
            raise StudyError(f"phrase {self.phrase_id}: bad correct_index")


@dataclass
class StudyConfig:
    phrases: List[PhraseSpec]
    pair_types: Tuple[str, ...] = PAIR_TYPES
    with_audio: bool = False
    seed: int = 0

    def validate(self):
        if not self.phrases:
            raise StudyError("study needs at least one phrase")
        for p in self.phrases:
            p.validate()
        bad = [t for t in self.pair_types if t not in PAIR_TYPES]
        if bad:
            raise StudyError(f"unknown pair types: {bad}")

    def to_dict(self) -> dict:
        return {
            "phrases": [
                {
                    "phrase_id": p.phrase_id,
                    "text": p.text,
                    "media": p.media,
                    "options": p.options,
                    "correct_index": p.correct_index,
                }
                for p in self.phrases
            ],
            "pair_types": list(self.pair_types),
            "with_audio": self.with_audio,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "StudyConfig":
        cfg = cls(
            phrases=[
                PhraseSpec(
                    phrase_id=p["phrase_id"],
                    text=p.get("text", p["phrase_id"]),
                    media=dict(p["media"]),
                    options=list(p["options"]),
                    correct_index=int(p["correct_index"]),
                )
                for p in obj["phrases"]
            ],
            pair_types=tuple(obj.get("pair_types", PAIR_TYPES)),
            with_audio=bool(obj.get("with_audio", False)),
            seed=int(obj.get("seed", 0)),
        )
        cfg.validate()
        return cfg


@dataclass
class Task:
    task_id: str
    kind: str  # "comparison" | "phrase"
    phrase_id: str
    pair_type: Optional[str] = None
    left_condition: Optional[str] = None
    right_condition: Optional[str] = None
    left_url: Optional[str] = None
    right_url: Optional[str] = None
    video_url: Optional[str] = None
    options: Optional[List[str]] = None
    correct_index: Optional[int] = None

    def client_view(self, index: int, total: int, with_audio: bool) -> dict:
        """What the rater sees: no condition labels, no correct answer."""
        view = {"task_id": self.task_id, "kind": self.kind,
                "index": index, "total": total, "with_audio": with_audio}
        if self.kind == "comparison":
            view["left"] = self.left_url
            view["right"] = self.right_url
        else:
            view["video"] = self.video_url
            view["options"] = self.options
        return view


def session_tasks(cfg: StudyConfig, session_id: str) -> List[Task]:
    """Deterministic task list for one session.

    Left/right order is counterbalanced per pair type (alternating with a
    seeded start), then the whole list is shuffled with a session-specific
    seed; phrase tasks follow the comparisons.
    """
    digest = hashlib.sha256(f"{cfg.seed}:{session_id}".encode()).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))

    tasks: List[Task] = []
    for pair_type in cfg.pair_types:
        first, second = pair_type.split("-")
        flip = bool(rng.integers(0, 2))
        for p in cfg.phrases:
            left, right = (second, first) if flip else (first, second)
            tasks.append(
                Task(
                    task_id=f"cmp-{p.phrase_id}-{pair_type}",
                    kind="comparison",
                    phrase_id=p.phrase_id,
                    pair_type=pair_type,
                    left_condition=left,
                    right_condition=right,
                    left_url=p.media[left],
                    right_url=p.media[right],
                )
            )
            flip = not flip
    order = rng.permutation(len(tasks))
    tasks = [tasks[i] for i in order]
    for p in cfg.phrases:
        tasks.append(
            Task(
                task_id=f"phrase-{p.phrase_id}",
                kind="phrase",
                phrase_id=p.phrase_id,
                video_url=p.media["M"],
                options=list(p.options),
                correct_index=p.correct_index,
            )
        )
    return tasks


@dataclass
class Study:
    study_id: str
    config: StudyConfig
    judgments: Dict[Tuple[str, str], dict] = field(default_factory=dict)

    def tasks_for(self, session_id: str) -> List[Task]:
        return session_tasks(self.config, session_id)


def _canonical(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def study_id_for(cfg: StudyConfig) -> str:
    return hashlib.sha256(_canonical(cfg.to_dict()).encode()).hexdigest()[:12]


class StudyStore:
    """In-memory studies + append-only journal with deterministic replay."""

    def __init__(self, journal_path: str | Path):
        self.journal_path = Path(journal_path)
        self.studies: Dict[str, Study] = {}
        self._lock = threading.Lock()
        if self.journal_path.exists():
            self._replay()

    # -- journal ---------------------------------------------------------

    def _append(self, event: dict) -> None:
        self.journal_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.journal_path, "a") as fh:
            fh.write(_canonical(event) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def _replay(self) -> None:
        for line in self.journal_path.read_text().splitlines():
            if not line.strip():
                continue
            event = json.loads(line)
            self._apply(event)

    def _apply(self, event: dict) -> None:
        if event["event"] == "study_created":
            cfg = StudyConfig.from_dict(event["config"])
            self.studies[event["study_id"]] = Study(event["study_id"], cfg)
        elif event["event"] == "judgment":
            study = self.studies[event["study_id"]]
            key = (event["session"], event["task_id"])
            study.judgments[key] = event
        else:
            raise StudyError(f"unknown journal event {event['event']!r}")

    # -- operations ------------------------------------------------------

    def create_study(self, cfg: StudyConfig) -> str:
        cfg.validate()
        study_id = study_id_for(cfg)
        with self._lock:
            if study_id not in self.studies:
                event = {"event": "study_created", "study_id": study_id,
                         "config": cfg.to_dict()}
                self._append(event)
                self._apply(event)
        return study_id

    def get_study(self, study_id: str) -> Study:
        try:
            return self.studies[study_id]
        except KeyError:
            raise StudyError(f"unknown study {study_id!r}") from None

    def next_task(self, study_id: str, session_id: str) -> Optional[dict]:
        study = self.get_study(study_id)
        tasks = study.tasks_for(session_id)
        answered = {t for (s, t) in study.judgments if s == session_id}
        for i, task in enumerate(tasks):
            if task.task_id not in answered:
                return task.client_view(i, len(tasks), study.config.with_audio)
        return None

    def submit_judgment(
        self,
        study_id: str,
        session_id: str,
        task_id: str,
        response: str,
        playback_complete: bool = False,
    ) -> dict:
        study = self.get_study(study_id)
        if not playback_complete:
            raise StudyError("judgment rejected: playback not completed")
        tasks = {t.task_id: t for t in study.tasks_for(session_id)}
        if task_id not in tasks:
            raise StudyError(f"unknown task {task_id!r} for session {session_id!r}")
        task = tasks[task_id]

        if task.kind == "comparison":
            if response not in CHOICES:
                raise StudyError(f"comparison response must be one of {CHOICES}")
            event = {
                "event": "judgment",
                "study_id": study_id,
                "session": session_id,
                "task_id": task_id,
                "kind": "comparison",
                "pair_type": task.pair_type,
                "left_condition": task.left_condition,
                "right_condition": task.right_condition,
                "choice": response,
            }
        else:
            try:
                option = int(response)
            except (TypeError, ValueError):
                raise StudyError("phrase response must be an option index 0-3") from None
            if not 0 <= option < 4:
                raise StudyError("phrase response must be an option index 0-3")
            event = {
                "event": "judgment",
                "study_id": study_id,
                "session": session_id,
                "task_id": task_id,
                "kind": "phrase",
                "option": option,
                "correct": option == task.correct_index,
            }

        key = (session_id, task_id)
        with self._lock:
            existing = study.judgments.get(key)
            if existing is not None:
                stripped = {k: v for k, v in existing.items() if k != "timestamp"}
                if stripped == event:
                    return {"status": "duplicate"}  # idempotent no-op
                raise ConflictError(
                    f"conflicting judgment for task {task_id!r} in session {session_id!r}"
                )
            self._append(event)
            self._apply(event)
        return {"status": "ok"}

    def results(self, study_id: str) -> dict:
        """Tables-style metrics: per pair type the at-least-equal fraction.

        For M-O / V-O / M-V the numerator counts raters who picked the
        first-listed condition or said "same"; for the O-O control it counts
        only "same" (could-not-tell). Cells with no judgments are absent.
        """
        study = self.get_study(study_id)
        per_type: Dict[str, List[dict]] = {}
        phrase_events: List[dict] = []
        for event in study.judgments.values():
            if event["kind"] == "comparison":
                per_type.setdefault(event["pair_type"], []).append(event)
            else:
                phrase_events.append(event)

        metrics: Dict[str, Optional[float]] = {}
        counts: Dict[str, int] = {}
        for pair_type, events in sorted(per_type.items()):
            first = pair_type.split("-")[0]
            hits = 0
            for e in events:
                if pair_type == "O-O":
                    hits += e["choice"] == "same"
                elif e["choice"] == "same":
                    hits += 1
                elif e["choice"] == "left":
                    hits += e["left_condition"] == first
                else:
                    hits += e["right_condition"] == first
            metrics[pair_type] = hits / len(events)
            counts[pair_type] = len(events)

        out = {
            "pair_metrics": metrics,
            "pair_counts": counts,
            "num_sessions": len({s for (s, _) in study.judgments}),
        }
        if phrase_events:
            out["phrase_accuracy"] = sum(e["correct"] for e in phrase_events) / len(
                phrase_events
            )
            out["phrase_count"] = len(phrase_events)
        return out


def build_app(store: StudyStore, media_root: Optional[str | Path] = None):
    """FastAPI wiring; CORS is open so the rater UI can be served anywhere."""
    from fastapi import FastAPI, HTTPException
    from fastapi.middleware.cors import CORSMiddleware
    from fastapi.staticfiles import StaticFiles

    app = FastAPI(title="pairwise video study")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.post("/studies")
    def create_study(config: dict):
        try:
            study_id = store.create_study(StudyConfig.from_dict(config))
        except (StudyError, KeyError) as e:
            raise HTTPException(status_code=400, detail=str(e))
        return {"study_id": study_id}

    @app.get("/studies/{study_id}/sessions/{session_id}/next")
    def next_task(study_id: str, session_id: str):
        try:
            task = store.next_task(study_id, session_id)
        except StudyError as e:
            raise HTTPException(status_code=404, detail=str(e))
        if task is None:
            total = len(store.get_study(study_id).tasks_for(session_id))
            return {"done": True, "total": total}
        return task

    @app.post("/judgments")
    def submit(j: JudgmentIn):
        try:
            return store.submit_judgment(
                j.study_id, j.session, j.task_id, j.response, j.playback_complete
            )
        except ConflictError as e:
            raise HTTPException(status_code=409, detail=str(e))
        except StudyError as e:
            code = 404 if "unknown" in str(e) else 400
            raise HTTPException(status_code=code, detail=str(e))

    @app.get("/studies/{study_id}/results")
    def results(study_id: str):
        try:
            return store.results(study_id)
        except StudyError as e:
            raise HTTPException(status_code=404, detail=str(e))

    if media_root is not None:
        app.mount("/media", StaticFiles(directory=str(media_root)), name="media")
    return app
