"""Sandboxed execution judge.

Candidate programs run in a fresh interpreter subprocess inside a throwaway
temp directory, with a scrubbed environment, an address-space limit, and a
wall-clock timeout that kills the whole process group. Verdicts come back
through a JSON file written by a small driver script, so an interpreter that
dies early (os._exit, hard crash) is observed as runtime_error rather than
trusted output.

Isolation is best-effort process hygiene (env scrubbing, -I isolated mode,
rlimits, per-run temp dirs); it is not an OS-level jail. The interpreter is
configuration: BUGCC_PYTHON overrides, otherwise the interpreter running this
process is used.
"""
from __future__ import annotations

import json
import logging
import os
import resource
import shutil
import signal
import subprocess
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .core import Problem, TestSuite, Verdict

logger = logging.getLogger(__name__)


class InfrastructureError(RuntimeError):
    """The sandbox itself failed (spawn error, missing interpreter)."""


@dataclass(frozen=True)
class ExecLimits:
    wall_time_s: float = 10.0
    memory_bytes: int = 512 * 1024 * 1024
    max_output_bytes: int = 1024 * 1024

    def validate(self) -> None:
        if min(self.wall_time_s, self.memory_bytes, self.max_output_bytes) <= 0:
            raise ValueError("all limits must be positive")


# Driver for function_check judging. Static text: the verdict path and entry
# point name arrive via argv, so no source templating is needed. AssertionError
# from the check program means wrong_answer; any other uncaught exception
# (SystemExit from exit() calls included) means runtime_error.
_DRIVER_SOURCE = """\
import json
import sys


def emit(kind, failed_case=None, detail=""):
    with open(sys.argv[1], "w", encoding="utf-8") as fh:
        json.dump({"kind": kind, "failed_case": failed_case,
                   "detail": detail[:2000]}, fh)
    raise SystemExit(0)


def main():
    with open("program.py", "r", encoding="utf-8") as fh:
        src = fh.read()
    try:
        code = compile(src, "program.py", "exec")
    except (SyntaxError, ValueError) as exc:
        emit("syntax_error", None, "%s: %s" % (type(exc).__name__, exc))
    ns = {"__name__": "__main__"}
    try:
        exec(code, ns)
    except BaseException as exc:
        emit("runtime_error", None, "import: %s: %s" % (type(exc).__name__, exc))
    with open("check.py", "r", encoding="utf-8") as fh:
        check_src = fh.read()
    try:
        exec(compile(check_src, "check.py", "exec"), ns)
        ns["check"](ns[sys.argv[2]])
    except AssertionError as exc:
        emit("wrong_answer", None, "AssertionError: %s" % (exc,))
    except BaseException as exc:
        emit("runtime_error", None, "%s: %s" % (type(exc).__name__, exc))
    emit("accepted")


main()
"""

# Syntax gate for io_pairs programs, run before any test case so compile
# failures are reported as syntax_error instead of a generic nonzero exit.
_PRECHECK_SOURCE = """\
import sys

with open(sys.argv[1], "r", encoding="utf-8") as fh:
    src = fh.read()
try:
    compile(src, sys.argv[1], "exec")
except (SyntaxError, ValueError) as exc:
    sys.stderr.write("%s: %s" % (type(exc).__name__, exc))
    raise SystemExit(3)
"""


def interpreter_path(configured: str | None = None) -> str:
    """Resolve the subject-language interpreter: env override, then config,
    then the interpreter running this process."""
    return os.environ.get("BUGCC_PYTHON") or configured or sys.executable


def _scrubbed_env(rundir: Path) -> dict[str, str]:
    return {
        "PATH": "/usr/bin:/bin",
        "HOME": str(rundir),
        "TMPDIR": str(rundir),
        "LC_ALL": "C.UTF-8",
        "LANG": "C.UTF-8",
        "PYTHONDONTWRITEBYTECODE": "1",
        "PYTHONHASHSEED": "0",
        "PYTHONIOENCODING": "utf-8",
    }


def _rlimit_preexec(memory_bytes: int):
    def apply_limits():
        resource.setrlimit(resource.RLIMIT_AS, (memory_bytes, memory_bytes))
        resource.setrlimit(resource.RLIMIT_CORE, (0, 0))
        resource.setrlimit(resource.RLIMIT_FSIZE, (64 * 1024 * 1024,) * 2)

    return apply_limits


@dataclass
class _RunResult:
    returncode: int | None
    timed_out: bool
    stdout_path: Path
    stderr_path: Path


def _run_sandboxed(
    argv: Sequence[str],
    rundir: Path,
    limits: ExecLimits,
    wall_time_s: float,
    stdin_text: str | None = None,
) -> _RunResult:
    stdout_path = rundir / "stdout.txt"
    stderr_path = rundir / "stderr.txt"
    try:
        with open(stdout_path, "wb") as out, open(stderr_path, "wb") as err:
            proc = subprocess.Popen(
                argv,
                cwd=rundir,
                env=_scrubbed_env(rundir),
                stdin=subprocess.PIPE,
                stdout=out,
                stderr=err,
                preexec_fn=_rlimit_preexec(limits.memory_bytes),
                start_new_session=True,
            )
            try:
                proc.communicate(
                    input=stdin_text.encode("utf-8") if stdin_text is not None else b"",
                    timeout=wall_time_s,
                )
                return _RunResult(proc.returncode, False, stdout_path, stderr_path)
            except subprocess.TimeoutExpired:
                _kill_group(proc)
                return _RunResult(None, True, stdout_path, stderr_path)
    except (OSError, ValueError) as exc:
        raise InfrastructureError(f"failed to spawn {argv[0]}: {exc}") from exc


def _kill_group(proc: subprocess.Popen) -> None:
    try:
        os.killpg(os.getpgid(proc.pid), signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        proc.kill()
    try:
        proc.communicate(timeout=5)
    except subprocess.TimeoutExpired:  # pragma: no cover - kernel-level stall
        logger.warning("process group %s did not die after SIGKILL", proc.pid)


def _read_capped(path: Path, cap: int) -> tuple[str, bool]:
    data = path.read_bytes()
    truncated = len(data) > cap
    return data[:cap].decode("utf-8", errors="replace"), truncated


def _tail(path: Path, size: int = 4096) -> str:
    try:
        data = path.read_bytes()
    except OSError:
        return ""
    return data[-size:].decode("utf-8", errors="replace")


def outputs_match(actual: str, expected: str) -> bool:
    """Competitive-judge comparison: drop one trailing newline on both sides,
    strip trailing whitespace per line, then require exact equality."""

    def canon(text: str) -> list[str]:
        if text.endswith("\n"):
            text = text[:-1]
        return [line.rstrip() for line in text.split("\n")]

    return canon(actual) == canon(expected)


def _effective_time(suite: TestSuite, limits: ExecLimits) -> float:
    return suite.time_limit_s if suite.time_limit_s else limits.wall_time_s


def _effective_memory(suite: TestSuite, limits: ExecLimits) -> int:
    return suite.memory_limit_bytes if suite.memory_limit_bytes else limits.memory_bytes


def run_function_check(
    program: str,
    suite: TestSuite,
    limits: ExecLimits = ExecLimits(),
    interpreter: str | None = None,
    scratch_dir: str | Path | None = None,
) -> Verdict:
    """Judge a candidate by running the suite's check program against it."""
    limits.validate()
    suite.validate("function_check")
    py = interpreter_path(interpreter)
    eff_limits = ExecLimits(
        wall_time_s=_effective_time(suite, limits),
        memory_bytes=_effective_memory(suite, limits),
        max_output_bytes=limits.max_output_bytes,
    )
    rundir = Path(tempfile.mkdtemp(prefix="bugcc-judge-", dir=scratch_dir))
    try:
        (rundir / "program.py").write_text(program, encoding="utf-8")
        (rundir / "check.py").write_text(suite.check_program or "", encoding="utf-8")
        (rundir / "driver.py").write_text(_DRIVER_SOURCE, encoding="utf-8")
        verdict_path = rundir / "verdict.json"
        result = _run_sandboxed(
            [py, "-I", "driver.py", str(verdict_path), suite.entry_point or ""],
            rundir,
            eff_limits,
            eff_limits.wall_time_s,
        )
        if result.timed_out:
            return Verdict(
                "time_limit_exceeded",
                detail=f"wall time over {eff_limits.wall_time_s:g}s",
            )
        if verdict_path.exists():
            try:
                obj = json.loads(verdict_path.read_text(encoding="utf-8"))
                return Verdict(obj["kind"], obj.get("failed_case"), obj.get("detail", ""))
            except (json.JSONDecodeError, KeyError):
                pass
        return Verdict(
            "runtime_error",
            detail=(
                f"interpreter exited rc={result.returncode} without a verdict; "
                f"stderr: {_tail(result.stderr_path)}"
            ),
        )
    finally:
        shutil.rmtree(rundir, ignore_errors=True)


def run_io_tests(
    program: str,
    suite: TestSuite,
    limits: ExecLimits = ExecLimits(),
    interpreter: str | None = None,
    scratch_dir: str | Path | None = None,
) -> Verdict:
    """Judge a candidate by running it once per (stdin, expected_stdout) case."""
    limits.validate()
    suite.validate("io_pairs")
    py = interpreter_path(interpreter)
    wall = _effective_time(suite, limits)
    memory = _effective_memory(suite, limits)
    eff_limits = ExecLimits(wall, memory, limits.max_output_bytes)
    rundir = Path(tempfile.mkdtemp(prefix="bugcc-judge-", dir=scratch_dir))
    try:
        (rundir / "program.py").write_text(program, encoding="utf-8")
        (rundir / "precheck.py").write_text(_PRECHECK_SOURCE, encoding="utf-8")
        gate = _run_sandboxed(
            [py, "-I", "precheck.py", "program.py"], rundir, eff_limits, wall
        )
        if gate.timed_out:
            return Verdict("time_limit_exceeded", detail="compile step timed out")
        if gate.returncode == 3:
            return Verdict("syntax_error", detail=_tail(gate.stderr_path))
        if gate.returncode != 0:
            return Verdict(
                "runtime_error",
                detail=f"precheck rc={gate.returncode}: {_tail(gate.stderr_path)}",
            )
        for index, (stdin_text, expected) in enumerate(suite.cases):
            case_dir = rundir / f"case-{index}"
            case_dir.mkdir()
            shutil.copy(rundir / "program.py", case_dir / "program.py")
            result = _run_sandboxed(
                [py, "-I", "program.py"],
                case_dir,
                eff_limits,
                wall,
                stdin_text=stdin_text,
            )
            if result.timed_out:
                return Verdict(
                    "time_limit_exceeded",
                    failed_case=index,
                    detail=f"case {index} over {wall:g}s",
                )
            if result.returncode != 0:
                return Verdict(
                    "runtime_error",
                    failed_case=index,
                    detail=f"rc={result.returncode}: {_tail(result.stderr_path)}",
                )
            actual, truncated = _read_capped(
                result.stdout_path, eff_limits.max_output_bytes
            )
            if truncated or not outputs_match(actual, expected):
                note = "output truncated at cap; " if truncated else ""
                return Verdict(
                    "wrong_answer",
                    failed_case=index,
                    detail=f"{note}case {index} mismatched",
                )
        return Verdict("accepted")
    finally:
        shutil.rmtree(rundir, ignore_errors=True)


def judge(
    candidate,
    problem: Problem,
    limits: ExecLimits = ExecLimits(),
    interpreter: str | None = None,
    scratch_dir: str | Path | None = None,
) -> Verdict:
    """Dispatch a candidate (CompletionSample or program text) on judge_mode."""
    program = getattr(candidate, "program", candidate)
    if not isinstance(program, str):
        raise TypeError("candidate must be a CompletionSample or program text")
    if problem.judge_mode == "function_check":
        return run_function_check(program, problem.tests, limits, interpreter, scratch_dir)
    if problem.judge_mode == "io_pairs":
        return run_io_tests(program, problem.tests, limits, interpreter, scratch_dir)
    raise ValueError(f"unknown judge_mode {problem.judge_mode!r}")


def judge_many(
    candidates: Iterable[tuple[str, Problem]],
    limits: ExecLimits = ExecLimits(),
    jobs: int = 1,
    interpreter: str | None = None,
    scratch_dir: str | Path | None = None,
) -> list[Verdict]:
    """Judge (program, problem) pairs, preserving input order.

    Executions are independent subprocesses, so a bounded thread pool is all
    the parallelism this needs.
    """
    pairs = list(candidates)
    if jobs <= 1:
        return [judge(p, prob, limits, interpreter, scratch_dir) for p, prob in pairs]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(
            pool.map(
                lambda pair: judge(pair[0], pair[1], limits, interpreter, scratch_dir),
                pairs,
            )
        )
