"""Operator triage HTTP service.

Serves scan outputs (detections, tile imagery, saliency), records operator
verdicts with opened/decided timestamps, and reports per-session totals in
the shape the field-campaign comparison consumes.

Persistence is an append-only JSON Lines event log: replaying it rebuilds
the exact service state (last verdict per (session, tile) wins). Timestamps
are RFC 3339 UTC; timing is captured client-side, opened_at being the moment
the tile was displayed.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse
from pydantic import BaseModel

DECISIONS = ("confirmed", "dismissed", "unsure")


class LoadError(Exception):
    """Scan directory is missing or has malformed outputs."""


def _parse_ts(value: str) -> datetime:
    try:
        ts = datetime.fromisoformat(value.replace("Z", "+00:00"))
    except (ValueError, AttributeError):
        raise ValueError(f"bad RFC 3339 timestamp: {value!r}") from None
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def _now_ts() -> str:
    return datetime.now(timezone.utc).isoformat().replace("+00:00", "Z")


@dataclass
class DetectionRecord:
    tile_id: str
    score: float
    rank: int
    color: str | None
    polygon: list
    has_saliency: bool


class ScanHandle:
    """Indexed view over one scan output directory."""

    def __init__(self, scan_id: str, scan_dir: Path, detections: list[DetectionRecord],
                 report: dict):
        self.scan_id = scan_id
        self.scan_dir = scan_dir
        self.detections = sorted(detections, key=lambda d: d.rank)
        self.by_tile = {d.tile_id: d for d in self.detections}
        self.report = report


def load_scan(scan_dir) -> ScanHandle:
    """Index detections.geojson + scan_report.json by tile id and score."""
    scan_dir = Path(scan_dir)
    geojson_path = scan_dir / "detections.geojson"
    report_path = scan_dir / "scan_report.json"
    if not geojson_path.exists():
        raise LoadError(f"{scan_dir}: missing detections.geojson")
    if not report_path.exists():
        raise LoadError(f"{scan_dir}: missing scan_report.json")
    try:
        collection = json.loads(geojson_path.read_text())
        report = json.loads(report_path.read_text())
    except json.JSONDecodeError as exc:
        raise LoadError(f"{scan_dir}: malformed JSON ({exc})") from None
    detections = []
    for i, feature in enumerate(collection.get("features", [])):
        props = feature.get("properties", {})
        tile_id = props.get("tile_id", f"<feature {i}>")
        for key in ("tile_id", "score", "rank"):
            if key not in props:
                raise LoadError(f"{scan_dir}: feature {tile_id} has no {key!r} property")
        detections.append(DetectionRecord(
            tile_id=props["tile_id"],
            score=float(props["score"]),
            rank=int(props["rank"]),
            color=props.get("color"),
            polygon=feature.get("geometry", {}).get("coordinates", []),
            has_saliency=(scan_dir / f"tile_{props['tile_id']}_saliency.png").exists(),
        ))
    return ScanHandle(scan_dir.name, scan_dir, detections, report)


@dataclass
class ReviewSession:
    session_id: str
    scan_id: str
    operator: str
    threshold: float
    created_at: str


@dataclass
class Verdict:
    session_id: str
    tile_id: str
    decision: str
    opened_at: str
    decided_at: str

    @property
    def minutes(self) -> float:
        delta = _parse_ts(self.decided_at) - _parse_ts(self.opened_at)
        return delta.total_seconds() / 60.0


class ReviewService:
    """In-memory state + append-only event log; one writer at a time."""

    def __init__(self, scan_dirs, log_path):
        self.scans: dict[str, ScanHandle] = {}
        for d in scan_dirs:
            handle = load_scan(d)
            self.scans[handle.scan_id] = handle
        self.log_path = Path(log_path)
        self.sessions: dict[str, ReviewSession] = {}
        self.verdicts: dict[tuple[str, str], Verdict] = {}
        self._lock = threading.Lock()
        self._replay()

    def _replay(self) -> None:
        if not self.log_path.exists():
            return
        lines = [ln for ln in self.log_path.read_text().splitlines() if ln.strip()]
        for i, line in enumerate(lines):
            try:
                event = json.loads(line)
            except json.JSONDecodeError:
                if i == len(lines) - 1:
                    break  # torn trailing write from a crash; drop it
                raise LoadError(f"{self.log_path}: malformed event at line {i + 1}")
            if event.get("event") == "session":
                s = ReviewSession(event["session_id"], event["scan_id"],
                                  event.get("operator", ""), event["threshold"],
                                  event["created_at"])
                self.sessions[s.session_id] = s
            elif event.get("event") == "verdict":
                v = Verdict(event["session_id"], event["tile_id"], event["decision"],
                            event["opened_at"], event["decided_at"])
                self.verdicts[(v.session_id, v.tile_id)] = v

    def _append(self, event: dict) -> None:
        with self.log_path.open("a") as fh:
            fh.write(json.dumps(event) + "\n")
            fh.flush()

    def create_session(self, scan_id: str, operator: str = "",
                       threshold: float = 0.2) -> ReviewSession:
        if scan_id not in self.scans:
            raise KeyError(f"unknown scan {scan_id!r}")
        if not (0.0 <= threshold <= 1.0):
            raise ValueError(f"threshold {threshold} outside [0, 1]")
        with self._lock:
            session = ReviewSession(uuid.uuid4().hex, scan_id, operator,
                                    threshold, _now_ts())
            self.sessions[session.session_id] = session
            self._append({"event": "session", "session_id": session.session_id,
                          "scan_id": scan_id, "operator": operator,
                          "threshold": threshold, "created_at": session.created_at})
        return session

    def list_detections(self, session_id: str, min_score: float = 0.0,
                        page: int = 1, page_size: int = 50) -> dict:
        """Rank-sorted page of the session scan's detections at min_score;
        membership matches the scanner's inclusive threshold filter."""
        session = self._session(session_id)
        return self.list_scan_detections(session.scan_id, min_score, page, page_size)

    def list_scan_detections(self, scan_id: str, min_score: float = 0.0,
                             page: int = 1, page_size: int = 50) -> dict:
        scan = self._scan(scan_id)
        hits = [d for d in scan.detections if d.score >= min_score]
        start = (max(page, 1) - 1) * page_size
        items = hits[start:start + page_size]
        return {
            "scan_id": scan_id,
            "total": len(hits),
            "page": page,
            "page_size": page_size,
            "items": [{"tile_id": d.tile_id, "score": d.score, "rank": d.rank,
                       "color": d.color, "has_saliency": d.has_saliency}
                      for d in items],
        }

    def post_verdict(self, session_id: str, tile_id: str, decision: str,
                     opened_at: str, decided_at: str) -> Verdict:
        session = self._session(session_id)
        scan = self._scan(session.scan_id)
        if tile_id not in scan.by_tile:
            raise KeyError(f"unknown tile {tile_id!r} in scan {session.scan_id!r}")
        if decision not in DECISIONS:
            raise ValueError(f"decision must be one of {DECISIONS}, got {decision!r}")
        if _parse_ts(decided_at) < _parse_ts(opened_at):
            raise ValueError("decided_at precedes opened_at")
        verdict = Verdict(session_id, tile_id, decision, opened_at, decided_at)
        with self._lock:
            existing = self.verdicts.get((session_id, tile_id))
            if existing == verdict:
                return existing  # idempotent replay, no duplicate log entry
            self.verdicts[(session_id, tile_id)] = verdict
            self._append({"event": "verdict", "session_id": session_id,
                          "tile_id": tile_id, "decision": decision,
                          "opened_at": opened_at, "decided_at": decided_at})
        return verdict

    def session_report(self, session_id: str) -> dict:
        self._session(session_id)
        final = [v for (sid, _), v in self.verdicts.items() if sid == session_id]
        counts = {d: sum(1 for v in final if v.decision == d) for d in DECISIONS}
        total_min = sum(v.minutes for v in final)
        confirmed = counts["confirmed"]
        return {
            "session_id": session_id,
            "reviewed": len(final),
            "confirmed": confirmed,
            "dismissed": counts["dismissed"],
            "unsure": counts["unsure"],
            "total_time_min": total_min,
            "avg_time_per_site_min": total_min / confirmed if confirmed else None,
        }

    def _session(self, session_id: str) -> ReviewSession:
        if session_id not in self.sessions:
            raise KeyError(f"unknown session {session_id!r}")
        return self.sessions[session_id]

    def _scan(self, scan_id: str) -> ScanHandle:
        if scan_id not in self.scans:
            raise KeyError(f"unknown scan {scan_id!r}")
        return self.scans[scan_id]


class SessionIn(BaseModel):
    scan_id: str
    operator: str = ""
    threshold: float = 0.2


class VerdictIn(BaseModel):
    tile_id: str
    decision: str
    opened_at: str
    decided_at: str


def create_app(scan_dirs, log_path, ui_origin: str = "*") -> FastAPI:
    service = ReviewService(scan_dirs, log_path)
    app = FastAPI(title="wastescan review")
    app.add_middleware(CORSMiddleware, allow_origins=[ui_origin],
                       allow_methods=["*"], allow_headers=["*"])
    app.state.service = service

    def _or_404(fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None

    @app.get("/scans")
    def scans():
        return [{"scan_id": h.scan_id, "tile_count": len(h.detections),
                 "report": h.report} for h in service.scans.values()]

    @app.get("/scans/{scan_id}/detections")
    def scan_detections(scan_id: str, min_score: float = 0.0, page: int = 1,
                        page_size: int = 50):
        return _or_404(service.list_scan_detections, scan_id, min_score, page, page_size)

    @app.get("/scans/{scan_id}/tiles/{tile_id}/{kind}")
    def tile_image(scan_id: str, tile_id: str, kind: str):
        scan = _or_404(service._scan, scan_id)
        if tile_id not in scan.by_tile:
            raise HTTPException(status_code=404, detail=f"unknown tile {tile_id!r}")
        names = {"image": f"tile_{tile_id}.png",
                 "saliency": f"tile_{tile_id}_saliency.png",
                 "overlay": f"tile_{tile_id}_overlay.png"}
        if kind not in names:
            raise HTTPException(status_code=404, detail=f"unknown artifact {kind!r}")
        path = scan.scan_dir / names[kind]
        if not path.exists():
            raise HTTPException(status_code=404,
                                detail=f"{kind} not produced for tile {tile_id}")
        return FileResponse(path, media_type="image/png")

    @app.post("/sessions")
    def new_session(body: SessionIn):
        session = _or_404(service.create_session, body.scan_id, body.operator,
                          body.threshold)
        return session.__dict__

    @app.post("/sessions/{session_id}/verdicts")
    def new_verdict(session_id: str, body: VerdictIn):
        verdict = _or_404(service.post_verdict, session_id, body.tile_id,
                          body.decision, body.opened_at, body.decided_at)
        return verdict.__dict__

    @app.get("/sessions/{session_id}/report")
    def report(session_id: str):
        return _or_404(service.session_report, session_id)

    return app
