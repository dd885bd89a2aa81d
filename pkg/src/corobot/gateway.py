"""HTTP session service: create, drive, and observe live replanning sessions.

The transport adds no nondeterminism: the event stream for a given
(scenario, seed, instruction sequence) is byte-identical to the batch run's
log, and the stream endpoint delivers events in emission order exactly once
per consumer, resumable by step index.

Within a session instruction handling is serialized; a post that arrives
while another instruction is in flight is queued and acknowledged with its
queue position. Reads never wait on instruction processing.
"""

from __future__ import annotations

import threading
import uuid
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterator

from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .engine import Session, SessionEvent
from .errors import ConfigError, UnknownSession, WrongPhase
from .harness import AblationMode, load_scenario
from .scene import canonical_json


class CreateSessionBody(BaseModel):
    scenario: str
    mode: str = "full"
    seed: int = 0


class InstructionBody(BaseModel):
    text: str


@dataclass
class _Record:
    """One live session plus the bookkeeping the endpoints need."""

    sid: str
    created_at: str
    scenario_name: str
    mode: str
    seed: int
    session: Session
    log_path: Path | None
    events: list[SessionEvent] = field(default_factory=list)
    cond: threading.Condition = field(default_factory=threading.Condition)
    mutex: threading.Lock = field(default_factory=threading.Lock)
    pending: deque[str] = field(default_factory=deque)
    busy: bool = False

    def handle(self) -> dict[str, Any]:
        return {
            "id": self.sid,
            "created_at": self.created_at,
            "scenario": self.scenario_name,
            "mode": self.mode,
            "seed": self.seed,
            "phase": self.session.phase,
            "outcome": self.session.outcome,
        }

    def on_event(self, ev: SessionEvent) -> None:
        with self.cond:
            self.events.append(ev)
            if self.log_path is not None:
                # comparison form on disk: replaying the same seed must yield a
                # byte-identical file, which wall-clock timings would break
                with self.log_path.open("a") as f:
                    f.write(canonical_json(ev.comparison_dict()) + "\n")
            self.cond.notify_all()


class SessionRegistry:
    """In-memory session store; ids are unique for the service lifetime."""

    def __init__(self, scenario_dir: Path, log_dir: Path | None = None) -> None:
        self.scenario_dir = scenario_dir
        self.log_dir = log_dir
        if log_dir is not None:
            log_dir.mkdir(parents=True, exist_ok=True)
        self._records: dict[str, _Record] = {}
        self._lock = threading.Lock()

    def _resolve_scenario(self, ref: str) -> Path:
        # refs are bare names or filenames inside the scenario directory
        name = Path(ref).name
        for candidate in (self.scenario_dir / name, self.scenario_dir / f"{name}.json"):
            if candidate.is_file():
                return candidate
        raise ConfigError(f"unknown scenario {ref!r} (looked in {self.scenario_dir})")

    def create(self, body: CreateSessionBody) -> dict[str, Any]:
        scenario = load_scenario(self._resolve_scenario(body.scenario))
        try:
            mode = AblationMode(body.mode)
        except ValueError:
            raise ConfigError(f"unknown mode {body.mode!r}") from None
        sid = uuid.uuid4().hex[:12]
        session = Session(
            scenario, internal_on=mode.internal_on, external_on=mode.external_on, seed=body.seed
        )
        rec = _Record(
            sid=sid,
            created_at=datetime.now(timezone.utc).isoformat(),
            scenario_name=scenario.name,
            mode=mode.value,
            seed=body.seed,
            session=session,
            log_path=self.log_dir / f"{sid}.jsonl" if self.log_dir else None,
        )
        session.on_event(rec.on_event)
        with self._lock:
            self._records[sid] = rec
        return rec.handle()

    def get(self, sid: str) -> _Record:
        with self._lock:
            rec = self._records.get(sid)
        if rec is None:
            raise UnknownSession(f"no session {sid!r}")
        return rec

    def all(self) -> list[_Record]:
        with self._lock:
            return list(self._records.values())

    def submit(self, sid: str, text: str) -> dict[str, Any]:
        """Run the instruction now, or queue it behind the one in flight."""
        rec = self.get(sid)
        with rec.mutex:
            if rec.busy:
                rec.pending.append(text)
                return {"queued": True, "queue_position": len(rec.pending)}
            rec.busy = True
        try:
            ack = rec.session.submit(text)
        except WrongPhase:
            with rec.mutex:
                rec.busy = False
            raise
        self._drain(rec)
        return {"queued": False, "step": ack}

    def _drain(self, rec: _Record) -> None:
        # queued posts already got their acknowledgment; the thread that owns
        # the busy flag runs them in arrival order
        while True:
            with rec.mutex:
                if not rec.pending:
                    rec.busy = False
                    return
                text = rec.pending.popleft()
            try:
                rec.session.submit(text)
            except WrongPhase:
                with rec.mutex:
                    rec.pending.clear()
                    rec.busy = False
                return


def _event_lines(rec: _Record, start: int, comparison: bool) -> Iterator[str]:
    """Ordered, exactly-once, resumable event feed; closes after SessionEnded."""
    idx = max(0, start)
    while True:
        with rec.cond:
            while idx >= len(rec.events) and rec.session.outcome is None:
                rec.cond.wait(timeout=0.25)
            if idx >= len(rec.events) and rec.session.outcome is not None:
                return
            batch = rec.events[idx:]
        for ev in batch:
            yield canonical_json(ev.comparison_dict() if comparison else ev.to_dict()) + "\n"
            idx += 1


def create_app(
    scenario_dir: str | Path = "configs",
    static_dir: str | Path | None = None,
    log_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="corobot gateway")
    registry = SessionRegistry(Path(scenario_dir), Path(log_dir) if log_dir else None)
    app.state.registry = registry

    def _error(status: int, code: str, exc: Exception) -> JSONResponse:
        return JSONResponse(status_code=status, content={"error": {"code": code, "message": str(exc)}})

    @app.exception_handler(ConfigError)
    async def _config_error(request: Request, exc: ConfigError) -> JSONResponse:
        return _error(400, "config_error", exc)

    @app.exception_handler(UnknownSession)
    async def _unknown_session(request: Request, exc: UnknownSession) -> JSONResponse:
        return _error(404, "unknown_session", exc)

    @app.exception_handler(WrongPhase)
    async def _wrong_phase(request: Request, exc: WrongPhase) -> JSONResponse:
        return _error(409, "wrong_phase", exc)

    @app.get("/healthz")
    def healthz() -> dict[str, bool]:
        return {"ok": True}

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody) -> dict[str, Any]:
        return registry.create(body)

    @app.get("/sessions")
    def list_sessions() -> dict[str, Any]:
        return {"sessions": [rec.handle() for rec in registry.all()]}

    @app.post("/sessions/{sid}/instructions")
    def post_instruction(sid: str, body: InstructionBody) -> dict[str, Any]:
        return registry.submit(sid, body.text)

    @app.get("/sessions/{sid}/state")
    def get_state(sid: str) -> dict[str, Any]:
        rec = registry.get(sid)
        return {"id": sid} | rec.session.state_snapshot()

    @app.get("/sessions/{sid}/events")
    def stream_events(
        sid: str,
        from_step: int = Query(0, alias="from"),
        form: str = Query("full", pattern="^(full|comparison)$"),
    ) -> StreamingResponse:
        rec = registry.get(sid)
        return StreamingResponse(
            _event_lines(rec, from_step, comparison=form == "comparison"),
            media_type="application/x-ndjson",
        )

    if static_dir is not None:
        # mounted last so API routes win; html=True serves index.html at /
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="console")

    return app
