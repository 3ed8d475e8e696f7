"""Telemetry and command bridge between a live simulation and the console.

A wall-clock-paced session thread steps the simulator; telemetry frames fan
out to subscriber queues at the sensor rate, and operator commands enter the
simulation through a queue drained every plant step. The websocket server
speaks JSON messages: a {"type": "hello", "schema": 1} handshake, then
telemetry frames; inbound operator commands receive acknowledgements.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import queue
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .simulator import Scenario, Simulation, TraceRecord

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
TELEMETRY_HZ = 30
COMMAND_KINDS = ("grab", "move_to", "release", "impulse", "set_reference",
                 "select_controller")


@dataclass
class OperatorCommand:
    kind: str
    point: np.ndarray | None = None
    vector: np.ndarray | None = None
    controller: str | None = None
    timestamp: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in COMMAND_KINDS:
            raise ValueError(f"unknown command kind {self.kind!r}")
        if self.kind == "move_to" and self.point is None:
            raise ValueError("move_to needs a point")
        if self.kind == "set_reference" and self.point is None:
            raise ValueError("set_reference needs a point")
        if self.kind == "impulse" and self.vector is None:
            raise ValueError("impulse needs a vector")
        if self.kind == "select_controller" and self.controller is None:
            raise ValueError("select_controller needs a controller name")
        if self.point is not None:
            self.point = np.asarray(self.point, dtype=float)
        if self.vector is not None:
            self.vector = np.asarray(self.vector, dtype=float)

    @classmethod
    def from_dict(cls, data: dict) -> "OperatorCommand":
        return cls(kind=data.get("kind", ""), point=data.get("point"),
                   vector=data.get("vector"), controller=data.get("controller"),
                   timestamp=float(data.get("timestamp", 0.0)))


def telemetry_frame(record: TraceRecord, controller: str) -> dict:
    """Fixed-key-order JSON telemetry payload (SI units throughout)."""
    state = record.state
    rel = state[0:3] - state[6:9]
    cable_dir = rel / max(float(np.linalg.norm(rel)), 1e-9)
    return {
        "type": "telemetry",
        "t": record.time,
        "quad_pos": [float(v) for v in state[6:9]],
        "quad_att": [float(v) for v in state[12:16]],
        "load_pos": [float(v) for v in state[0:3]],
        "cable_dir": [float(v) for v in cable_dir],
        "mode": int(record.mode_detected),
        "cam_load": [float(v) for v in record.cam_load],
        "thrust_cmd": float(record.thrust_cmd),
        "rates_cmd": [float(v) for v in record.rates_cmd],
        "fov_inside": bool(record.fov_inside),
        "controller": controller,
    }


def live_scenario(duration: float = 3600.0, seed: int = 0,
                  controller: str = "hpa") -> Scenario:
    """Default interactive session: hover set-point, reduced control rate.

    The pure-Python solver cannot sustain 150 Hz in wall-clock time, so live
    sessions run the controller at 50 Hz; batch runs keep the full rate.
    """
    return Scenario(
        name="live",
        duration=duration,
        seed=seed,
        controller=controller,
        trajectory={"kind": "hover", "point": [0.0, 0.0, 0.7]},
        mpc_hz=50,
        mpc_overrides={"q_cam": [2000.0, 2000.0]},
    )


@dataclass
class _PendingCommand:
    command: OperatorCommand
    done: threading.Event = field(default_factory=threading.Event)
    error: str | None = None


class SimSession:
    """Owns the simulation thread; applies commands between plant steps."""

    def __init__(self, scenario: Scenario, realtime: bool = True, speed: float = 1.0):
        self.sim = Simulation(scenario)
        self.realtime = realtime
        self.speed = speed
        self._commands: queue.Queue[_PendingCommand] = queue.Queue()
        self._subscribers: list[queue.Queue] = []
        self._sub_lock = threading.Lock()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self._frame_count = 0

    # ------------------------------------------------------------- lifecycle

    def start(self) -> None:
        if self._thread is not None:
            raise RuntimeError("session already started")
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)

    # ----------------------------------------------------------- interaction

    def subscribe(self, maxsize: int = 16) -> queue.Queue:
        q: queue.Queue = queue.Queue(maxsize=maxsize)
        with self._sub_lock:
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self._sub_lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def send_command(self, command: OperatorCommand, timeout: float = 2.0) -> str | None:
        """Queue a command; returns None on success, else the error text."""
        pending = _PendingCommand(command)
        self._commands.put(pending)
        if not pending.done.wait(timeout):
            return "session did not process the command in time"
        return pending.error

    # -------------------------------------------------------------- internal

    def _apply(self, pending: _PendingCommand) -> None:
        cmd = pending.command
        sim = self.sim
        try:
            if cmd.kind == "grab":
                sim.command_grab()
            elif cmd.kind == "move_to":
                sim.command_move_to(cmd.point)
            elif cmd.kind == "release":
                sim.command_release()
            elif cmd.kind == "impulse":
                sim.command_impulse(cmd.vector)
            elif cmd.kind == "set_reference":
                sim.command_set_reference(cmd.point)
            elif cmd.kind == "select_controller":
                sim.command_select_controller(cmd.controller)
        except ValueError as exc:
            pending.error = str(exc)
        pending.done.set()

    def _publish(self, record: TraceRecord) -> None:
        frame = telemetry_frame(record, self.sim.controller_name)
        with self._sub_lock:
            subs = list(self._subscribers)
        for q in subs:
            try:
                q.put_nowait(frame)
            except queue.Full:
                try:
                    q.get_nowait()  # drop the oldest frame for a slow consumer
                    q.put_nowait(frame)
                except queue.Empty:
                    pass

    def _loop(self) -> None:
        sim = self.sim
        plant_hz = sim.scenario.plant_hz
        frames_emitted = 0
        wall_start = time.perf_counter()
        while not self._stop.is_set() and not sim.done:
            while True:
                try:
                    self._apply(self._commands.get_nowait())
                except queue.Empty:
                    break
            record = sim.step_once()
            if record is not None and sim.k * TELEMETRY_HZ >= frames_emitted * plant_hz:
                frames_emitted += 1
                self._publish(record)
            if self.realtime:
                target = wall_start + sim.t / self.speed
                delay = target - time.perf_counter()
                if delay > 0:
                    time.sleep(delay)
        if sim.status != "ok":
            log.warning("session ended: %s", sim.status)


# ------------------------------------------------------------------ websocket


async def _handle_connection(ws, session: SimSession) -> None:
    await ws.send(json.dumps({"type": "hello", "schema": SCHEMA_VERSION}))
    frames = session.subscribe()
    loop = asyncio.get_running_loop()

    async def sender():
        while True:
            frame = await loop.run_in_executor(None, frames.get)
            if frame is None:
                break
            await ws.send(json.dumps(frame))

    send_task = asyncio.create_task(sender())
    try:
        async for message in ws:
            try:
                data = json.loads(message)
                command = OperatorCommand.from_dict(data)
            except (ValueError, TypeError, json.JSONDecodeError) as exc:
                await ws.send(json.dumps({"type": "ack", "ok": False, "error": str(exc)}))
                continue
            error = await loop.run_in_executor(None, session.send_command, command)
            ack = {"type": "ack", "ok": error is None, "kind": command.kind}
            if error is not None:
                ack["error"] = error
            await ws.send(json.dumps(ack))
    finally:
        session.unsubscribe(frames)
        try:
            # wake the executor thread blocked on the queue so it can exit
            frames.put_nowait(None)
        except queue.Full:
            pass
        send_task.cancel()


async def serve(session: SimSession, host: str = "127.0.0.1", port: int = 8765):
    """Run the websocket bridge until cancelled."""
    import websockets.asyncio.server as ws_server

    async def handler(ws):
        await _handle_connection(ws, session)

    async with ws_server.serve(handler, host, port) as server:
        await server.serve_forever()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="hpa-sim-bridge",
                                     description="live telemetry/command bridge")
    parser.add_argument("--port", type=int, default=8765)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--controller", choices=["hpa", "taut", "geometric"], default="hpa")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--speed", type=float, default=1.0,
                        help="wall-clock pacing factor (1.0 = real time)")
    args = parser.parse_args(argv)
    session = SimSession(live_scenario(seed=args.seed, controller=args.controller),
                         realtime=True, speed=args.speed)
    session.start()
    try:
        asyncio.run(serve(session, args.host, args.port))
    except KeyboardInterrupt:
        pass
    finally:
        session.stop()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
