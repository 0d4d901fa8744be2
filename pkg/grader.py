"""Scored test runner for preemptql.

Each case lives in tests/cases/<n>-<name>/config.toml with a [meta] table
(name, description, score) and ordered [[run]] steps. A step runs one
command in the case directory and may check its return code, produced
files, stdout/stderr against golden files or patterns, or hand the whole
result to a special judge script.

Step commands and arguments may use ${python}, ${root_dir}, ${test_dir},
${build_dir} and ${common_dir}. The project root and the common directory
are on PYTHONPATH for every step and every judge.
"""

import argparse
import json
import os
import re
import subprocess
import sys
import time
import traceback
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Protocol, Tuple

# --- BOOTSTRAP: Auto-setup environment ---
import bootstrap

bootstrap.initialize()
# -----------------------------------------

import tomli  # noqa: E402
from rich.console import Console, RenderableType  # noqa: E402
from rich.panel import Panel  # noqa: E402
from rich.progress import Progress, SpinnerColumn, Task, TextColumn  # noqa: E402
from rich.table import Table  # noqa: E402
from rich.text import Text  # noqa: E402

HISTORY_FILE = ".test_history"
HISTORY_LIMIT = 20


@dataclass
class TestResult:
    success: bool
    message: str
    time: float
    score: float
    max_score: float
    step_scores: Optional[List[Tuple[str, float, float]]] = None
    error_details: Optional[Any] = None

    @property
    def status(self) -> str:
        if not self.success:
            return "FAIL"
        if self.score == self.max_score:
            return "PASS"
        return "PARTIAL"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "success": self.success,
            "status": self.status,
            "message": self.message,
            "time": round(self.time, 2),
            "score": self.score,
            "max_score": self.max_score,
            "step_scores": self.step_scores,
            "error_details": self.error_details,
        }


@dataclass
class TestCase:
    path: Path
    meta: Dict[str, Any]
    run_steps: List[Dict[str, Any]]


class Config:
    def __init__(self, project_root: Path):
        self.project_root = project_root
        config_path = project_root / "grader_config.toml"
        self._config: Dict[str, Any] = {}
        if config_path.exists():
            with open(config_path, "rb") as f:
                self._config = tomli.load(f)

    @property
    def paths(self) -> Dict[str, Path]:
        paths = {"tests_dir": "tests", "cases_dir": "tests/cases", "common_dir": "tests/common"}
        paths.update(self._config.get("paths", {}))
        return {name: self.project_root / value for name, value in paths.items()}

    @property
    def setup_steps(self) -> List[Dict[str, Any]]:
        return self._config.get("setup", {}).get("steps", [])

    @property
    def groups(self) -> Dict[str, List[str]]:
        return self._config.get("groups", {})

    @property
    def default_timeout(self) -> float:
        return float(self._config.get("grader", {}).get("default_timeout", 30.0))

    def step_env(self) -> Dict[str, str]:
        env = os.environ.copy()
        extra = [str(self.project_root), str(self.paths["common_dir"])]
        if env.get("PYTHONPATH"):
            extra.append(env["PYTHONPATH"])
        env["PYTHONPATH"] = os.pathsep.join(extra)
        env.setdefault("PREEMPTQL_LOG", "WARNING")
        return env


class OutputChecker(Protocol):
    def check(
        self, step: Dict[str, Any], output: str, error: str, return_code: int, test_dir: Path
    ) -> Tuple[bool, str, Optional[float]]:
        ...


def _golden(test_dir: Path, name: str) -> Optional[str]:
    path = test_dir / name
    if not path.exists():
        return None
    return path.read_text(encoding="utf-8")


def _same(actual: str, expected: str, ignore_whitespace: bool) -> bool:
    if ignore_whitespace:
        return actual.split() == expected.split()
    return actual.rstrip() == expected.rstrip()


class StandardOutputChecker:
    def check(self, step, output, error, return_code, test_dir):
        check = step.get("check", {})

        if "return_code" in check and return_code != check["return_code"]:
            return False, f"Expected return code {check['return_code']}, got {return_code}", None

        for file_path in check.get("files", []):
            resolved = Path(file_path.replace("${test_dir}", str(test_dir)).replace("${build_dir}", str(test_dir / "build")))
            if not resolved.is_absolute():
                resolved = test_dir / resolved
            if not resolved.exists():
                return False, f"Required file '{file_path}' not found", None

        ignore_whitespace = check.get("ignore_whitespace", False)
        for stream, actual in (("stdout", output), ("stderr", error)):
            if stream not in check:
                continue
            expected = _golden(test_dir, check[stream])
            if expected is None:
                return False, f"Expected {stream} file {check[stream]} not found", None
            if not _same(actual, expected, ignore_whitespace):
                return False, f"{stream} does not match {check[stream]}", None

        return True, "All checks passed", None


class StatusSpinnerColumn(SpinnerColumn):
    """Spinner that swaps to a status icon once the task has one."""

    def render(self, task: Task) -> RenderableType:
        icon = task.fields.get("status_icon")
        if icon:
            return Text.from_markup(icon)
        return super().render(task)


class SpecialJudgeChecker:
    """Runs `judge.py` with the step result as JSON on stdin.

    The judge prints {"success": bool, "message": str, "score"?: float}.
    """

    def __init__(self, env: Dict[str, str]):
        self.env = env

    def check(self, step, output, error, return_code, test_dir):
        check = step.get("check", {})
        if "special_judge" not in check:
            return True, "No special judge specified", None

        judge_script = test_dir / check["special_judge"]
        if not judge_script.exists():
            return False, f"Special judge script {check['special_judge']} not found", None

        input_data = {
            "stdout": output,
            "stderr": error,
            "return_code": return_code,
            "test_dir": str(test_dir),
            "build_dir": str(test_dir / "build"),
            "max_score": step.get("score", 0),
        }
        try:
            process = subprocess.run(
                [sys.executable, str(judge_script)],
                input=json.dumps(input_data),
                capture_output=True,
                text=True,
                cwd=test_dir,
                env=self.env,
                timeout=step.get("judge_timeout", 60.0),
            )
            result = json.loads(process.stdout)
        except subprocess.TimeoutExpired:
            return False, "Special judge timed out", None
        except ValueError:
            detail = process.stderr.strip().splitlines()[-1:] or ["no output"]
            return False, f"Special judge crashed: {detail[0]}", None
        score = result.get("score")
        if score is not None:
            score = min(score, step.get("score", 0))
        return bool(result["success"]), result.get("message", "No message provided"), score


class PatternChecker:
    def check(self, step, output, error, return_code, test_dir):
        check = step.get("check", {})
        for key, text, label in (("stdout_pattern", output, "Output"), ("stderr_pattern", error, "Error output")):
            if key in check and not re.search(check[key], text, re.MULTILINE):
                return False, f"{label} does not match pattern {check[key]!r}", None
        return True, "All pattern checks passed", None


class CompositeChecker:
    def __init__(self, env: Dict[str, str]):
        self.checkers: List[OutputChecker] = [
            StandardOutputChecker(),
            PatternChecker(),
            SpecialJudgeChecker(env),
        ]

    def check(self, step, output, error, return_code, test_dir):
        score = None
        for checker in self.checkers:
            success, message, checker_score = checker.check(step, output, error, return_code, test_dir)
            if not success:
                return success, message, checker_score
            if checker_score is not None:
                score = checker_score
        return True, "All checks passed", score


class TestRunner:
    def __init__(self, config: Config, console: Console, verbose: bool = False, dry_run: bool = False):
        self.config = config
        self.console = console
        self.env = config.step_env()
        self.checker = CompositeChecker(self.env)
        self.verbose = verbose
        self.dry_run = dry_run

    def substitutions(self, test_dir: Path) -> Dict[str, str]:
        return {
            "${python}": sys.executable,
            "${root_dir}": str(self.config.project_root),
            "${test_dir}": str(test_dir),
            "${build_dir}": str(test_dir / "build"),
            "${common_dir}": str(self.config.paths["common_dir"]),
        }

    def resolve(self, value: Any, test_dir: Path) -> str:
        text = str(value)
        for var, replacement in self.substitutions(test_dir).items():
            text = text.replace(var, replacement)
        return text

    def command_of(self, step: Dict[str, Any], test_dir: Path) -> List[str]:
        return [self.resolve(step["command"], test_dir)] + [
            self.resolve(arg, test_dir) for arg in step.get("args", [])
        ]

    def run_test(self, test: TestCase) -> TestResult:
        start_time = time.perf_counter()
        try:
            build_dir = test.path / "build"
            build_dir.mkdir(exist_ok=True)
            for file in build_dir.iterdir():
                if file.is_file():
                    file.unlink()

            if self.dry_run:
                self.console.print(f"[bold]Test case:[/bold] {test.meta['name']}")
                if "description" in test.meta:
                    self.console.print(f"[bold]Description:[/bold] {test.meta['description']}")
                return self._execute_test_steps(test)

            status_icons = {"PASS": "[green]✓[/green]", "PARTIAL": "[yellow]~[/yellow]", "FAIL": "[red]✗[/red]"}
            final_status = {"PASS": "[green]Passed[/green]", "PARTIAL": "[yellow]Partial[/yellow]", "FAIL": "[red]Failed[/red]"}
            with Progress(
                StatusSpinnerColumn(),
                TextColumn("[progress.description]{task.description}"),
                console=self.console,
            ) as progress:
                total_steps = len(test.run_steps)
                task = progress.add_task(f"Running {test.meta['name']} [0/{total_steps}]...", total=total_steps, status_icon="")
                result = self._execute_test_steps(test, progress, task)
                progress.update(
                    task,
                    completed=total_steps,
                    description=f"{test.meta['name']} [{total_steps}/{total_steps}]: {final_status[result.status]}",
                    status_icon=status_icons[result.status],
                )
            if not result.success:
                self._print_failures(test, result)
            return result
        except Exception as e:
            self.console.print(traceback.format_exc())
            return TestResult(False, f"Error: {e}", time.perf_counter() - start_time, 0, test.meta["score"])

    def _print_failures(self, test: TestCase, result: TestResult) -> None:
        for details in result.error_details or []:
            self.console.print(f"\n[red]Test '{test.meta['name']}' failed at step {details['step']}:[/red]")
            self.console.print(f"Command: {details['command']}", markup=False)
            for key, title in (("stdout", "Actual output"), ("stderr", "Error output")):
                if key in details:
                    self.console.print(f"\n{title}:")
                    self.console.print(details[key].strip()[-4000:], markup=False)
            if "error_message" in details:
                self.console.print("\nError details:")
                self.console.print(f"  {details['error_message']}", markup=False)
            if "return_code" in details:
                self.console.print(f"\nReturn code: {details['return_code']}")
            self.console.print()

    def _execute_test_steps(self, test: TestCase, progress: Optional[Progress] = None, task: Optional[Any] = None) -> TestResult:
        start_time = time.perf_counter()
        step_scores: List[Tuple[str, float, float]] = []
        total_score = 0.0
        has_step_scores = any("score" in step for step in test.run_steps)
        max_possible_score = (
            sum(step.get("score", 0) for step in test.run_steps) if has_step_scores else test.meta["score"]
        )
        errors = []

        for i, step in enumerate(test.run_steps, 1):
            step_name = step.get("name", step["command"])
            if progress is not None:
                progress.update(
                    task,
                    description=f"Running {test.meta['name']} [{i}/{len(test.run_steps)}]: {step_name}",
                    completed=i - 1,
                )
            result = self._execute_single_step(test, step, i)
            if not result.success:
                errors.append(result.error_details)
                if step.get("must_pass", True):
                    return TestResult(
                        False,
                        result.message,
                        time.perf_counter() - start_time,
                        total_score,
                        max_possible_score,
                        step_scores,
                        errors,
                    )
                continue
            total_score += result.score
            if result.step_scores:
                step_scores.extend(result.step_scores)

        if has_step_scores:
            total_score = min(total_score, test.meta["score"])
        else:
            total_score = test.meta["score"]
            step_scores = None

        success = self.dry_run or total_score > 0
        return TestResult(
            success,
            "All steps completed" if not errors else "Some optional steps failed",
            time.perf_counter() - start_time,
            total_score,
            max_possible_score,
            step_scores,
            errors or None,
        )

    def _execute_single_step(self, test: TestCase, step: Dict[str, Any], step_index: int) -> TestResult:
        start_time = time.perf_counter()
        command = self.command_of(step, test.path)

        if self.dry_run:
            self.console.print(f"\n[bold cyan]Step {step_index}:[/bold cyan] {step.get('name', '')}")
            self.console.print(f"[bold]Command:[/bold] {' '.join(command)}", markup=False)
            for check_type, check_value in step.get("check", {}).items():
                self.console.print(f"  - {check_type}: {check_value}", markup=False)
            return TestResult(True, "Dry run", 0.0, 0, 0)

        env = dict(self.env)
        for key, value in step.get("env", {}).items():
            env[key] = self.resolve(value, test.path)

        timeout = step.get("timeout", self.config.default_timeout)
        try:
            process = subprocess.run(
                command,
                cwd=test.path,
                input=self._stdin_data(test, step),
                capture_output=True,
                text=True,
                timeout=timeout,
                env=env,
            )
        except subprocess.TimeoutExpired as e:
            return self._failure(
                test, step, step_index, f"timed out after {timeout}s", start_time, command,
                _text(e.stdout), _text(e.stderr),
            )

        if self.verbose:
            self.console.print(f"[bold cyan]Step {step_index} output:[/bold cyan]")
            self.console.print(" ".join(command), markup=False)
            if process.stdout:
                self.console.print(process.stdout, markup=False)
            if process.stderr:
                self.console.print(process.stderr, markup=False)
            self.console.print(f"[bold]Return code:[/bold] {process.returncode}\n")

        score = None
        if "check" in step:
            success, message, score = self.checker.check(
                step, process.stdout, process.stderr, process.returncode, test.path
            )
            if not success:
                return self._failure(
                    test, step, step_index, message, start_time, command,
                    process.stdout, process.stderr, process.returncode,
                )

        step_score = score if score is not None else step.get("score", 0)
        return TestResult(
            True,
            "Step completed successfully",
            time.perf_counter() - start_time,
            step_score,
            step.get("score", test.meta["score"]),
            [(step.get("name", step["command"]), step_score, step.get("score", 0))] if step.get("score", 0) > 0 else None,
        )

    def _stdin_data(self, test: TestCase, step: Dict[str, Any]) -> Optional[str]:
        if "stdin" not in step:
            return None
        stdin_file = test.path / step["stdin"]
        if not stdin_file.exists():
            raise FileNotFoundError(f"Input file {step['stdin']} not found")
        return stdin_file.read_text(encoding="utf-8")

    def _failure(
        self,
        test: TestCase,
        step: Dict[str, Any],
        step_index: int,
        message: str,
        start_time: float,
        command: List[str],
        stdout: str = "",
        stderr: str = "",
        return_code: Optional[int] = None,
    ) -> TestResult:
        step_name = step.get("name", step["command"])
        details: Dict[str, Any] = {
            "step": step_index,
            "step_name": step_name,
            "error_message": message,
            "command": " ".join(command),
        }
        if stdout:
            details["stdout"] = stdout
        if stderr:
            details["stderr"] = stderr
        if return_code is not None:
            details["return_code"] = return_code
        return TestResult(
            False,
            f"Step {step_index} '{step_name}' failed: {message}",
            time.perf_counter() - start_time,
            0,
            step.get("score", test.meta["score"]),
            error_details=details,
        )


def _text(data: Any) -> str:
    if data is None:
        return ""
    return data.decode("utf-8", "replace") if isinstance(data, bytes) else data


class ResultFormatter(ABC):
    @abstractmethod
    def format_results(self, test_cases: List[TestCase], results: List[Dict[str, Any]], total_score: float, max_score: float) -> None:
        pass


class JsonFormatter(ResultFormatter):
    def format_results(self, test_cases, results, total_score, max_score):
        print(
            json.dumps(
                {
                    "total_score": round(total_score, 1),
                    "max_score": round(max_score, 1),
                    "percentage": round(total_score / max_score * 100, 1) if max_score else 0.0,
                    "tests": results,
                },
                ensure_ascii=False,
            )
        )


class TableFormatter(ResultFormatter):
    def __init__(self, console: Console):
        self.console = console

    def format_results(self, test_cases, results, total_score, max_score):
        table = Table(show_header=True, header_style="bold")
        table.add_column("Test Case", style="cyan")
        table.add_column("Result", justify="center")
        table.add_column("Time", justify="right")
        table.add_column("Score", justify="right")
        table.add_column("Message")
        status_style = {"PASS": "[green]PASS[/green]", "PARTIAL": "[yellow]PARTIAL[/yellow]", "FAIL": "[red]FAIL[/red]"}
        for test, result in zip(test_cases, results):
            table.add_row(
                test.meta["name"],
                status_style[result["status"]],
                f"{result['time']:.2f}s",
                f"{result['score']:.1f}/{result['max_score']:.1f}",
                Text(result["message"]),
            )
        self.console.print(table)
        percentage = total_score / max_score * 100 if max_score else 0.0
        self.console.print()
        self.console.print(
            Panel(
                f"[bold]Total Score: {total_score:.1f}/{max_score:.1f} ({percentage:.1f}%)[/bold]",
                border_style="green" if total_score == max_score else "yellow",
            )
        )
        self.console.print()


class GraderError(Exception):
    pass


class Grader:
    def __init__(self, verbose: bool = False, json_output: bool = False, dry_run: bool = False):
        self.config = Config(Path(__file__).resolve().parent)
        self.json_output = json_output
        self.dry_run = dry_run
        self.console = Console(quiet=json_output)
        self.runner = TestRunner(self.config, self.console, verbose=verbose, dry_run=dry_run)
        self.formatter: ResultFormatter = JsonFormatter() if json_output else TableFormatter(self.console)

    def run_all_tests(
        self,
        specific_test: Optional[str] = None,
        prefix_match: bool = False,
        group: Optional[str] = None,
        specific_paths: Optional[List[Path]] = None,
    ) -> Tuple[float, float]:
        if not self._run_setup_steps():
            raise GraderError("setup failed")
        test_cases = self._load_test_cases(specific_test, prefix_match, group, specific_paths)
        if self.dry_run:
            self.console.print("\n[bold]Dry-run mode enabled. Only showing commands.[/bold]\n")
        else:
            self.console.print(f"\n[bold]Running {len(test_cases)} test cases...[/bold]\n")

        total_score = max_score = 0.0
        results = []
        for test in test_cases:
            result = self.runner.run_test(test)
            results.append({"name": test.meta["name"], "path": str(test.path), **result.to_dict()})
            total_score += result.score
            max_score += result.max_score

        if not self.dry_run:
            self.formatter.format_results(test_cases, results, total_score, max_score)
            self._save_history(results, total_score, max_score)
        return total_score, max_score

    def _save_history(self, results: List[Dict[str, Any]], total_score: float, max_score: float) -> None:
        path = self.config.project_root / HISTORY_FILE
        try:
            history = json.loads(path.read_text(encoding="utf-8")) if path.exists() else []
        except ValueError:
            history = []
        history.append(
            {
                "timestamp": time.strftime("%Y-%m-%d %H:%M:%S"),
                "total_score": total_score,
                "max_score": max_score,
                "tests": [{k: r[k] for k in ("name", "path", "status", "score", "max_score")} for r in results],
            }
        )
        path.write_text(json.dumps(history[-HISTORY_LIMIT:], indent=2, ensure_ascii=False), encoding="utf-8")

    def failed_paths_from_history(self) -> List[Path]:
        path = self.config.project_root / HISTORY_FILE
        if not path.exists():
            raise GraderError("no test history found")
        history = json.loads(path.read_text(encoding="utf-8"))
        if not history:
            raise GraderError("test history is empty")
        return [Path(t["path"]) for t in history[-1]["tests"] if t["status"] != "PASS"]

    def _run_setup_steps(self) -> bool:
        steps = self.config.setup_steps
        if not steps:
            return True
        with Progress(
            StatusSpinnerColumn(),
            TextColumn("[progress.description]{task.description}", markup=True),
            console=self.console,
        ) as progress:
            task = progress.add_task(f"Running setup steps [0/{len(steps)}]...", total=len(steps), status_icon="")
            for i, step in enumerate(steps, 1):
                label = step.get("name") or step.get("command") or "Setup step"
                prefix = f"Running setup steps [{i}/{len(steps)}]: "
                progress.update(task, description=prefix + (step.get("message") or f"Running {label}..."), completed=i - 1)
                if not self._run_setup_step(step):
                    progress.update(task, description=prefix + f"{label} failed", completed=i, status_icon="[red]✗[/red]")
                    return False
                progress.update(
                    task,
                    description=prefix + (step.get("success_message") or f"{label} completed"),
                    completed=i,
                    status_icon="[green]✓[/green]",
                )
        return True

    def _run_setup_step(self, step: Dict[str, Any]) -> bool:
        if step.get("type", "command") != "command":
            self.console.print(f"[red]Error:[/red] Unknown setup step type: {step['type']}")
            return False
        root = self.config.project_root
        command = [self.runner.resolve(step["command"], root)] + [
            self.runner.resolve(arg, root) for arg in step.get("args", [])
        ]
        try:
            process = subprocess.run(
                command,
                cwd=root,
                capture_output=True,
                text=True,
                timeout=step.get("timeout", self.config.default_timeout),
                env=self.runner.env,
            )
        except (OSError, subprocess.TimeoutExpired) as e:
            self.console.print(f"[red]Error:[/red] Command failed: {e}")
            return False
        if process.returncode != 0:
            self.console.print("[red]Error:[/red] Command failed:")
            self.console.print(process.stderr, markup=False)
            return False
        return True

    def _load_test_cases(
        self,
        specific_test: Optional[str] = None,
        prefix_match: bool = False,
        group: Optional[str] = None,
        specific_paths: Optional[List[Path]] = None,
    ) -> List[TestCase]:
        cases_dir = self.config.paths["cases_dir"]
        if specific_paths:
            cases = [self._load_single_test(p) for p in specific_paths if (p / "config.toml").exists()]
            if not cases:
                raise GraderError("no valid test cases found in the given paths")
            return cases

        if group:
            matching = [g for g in self.config.groups if g.lower().startswith(group.lower())]
            if not matching:
                raise GraderError(f"no group matching '{group}' in grader_config.toml")
            if len(matching) > 1 and group not in matching:
                raise GraderError(f"several groups match '{group}': {', '.join(matching)}")
            name = group if group in matching else matching[0]
            cases = []
            for test_id in self.config.groups[name]:
                cases.extend(self._load_test_cases(test_id, True))
            return cases

        if not cases_dir.exists():
            raise GraderError(f"{cases_dir} not found")
        case_dirs = sorted(
            (d for d in cases_dir.iterdir() if d.is_dir() and (d / "config.toml").exists()),
            key=_sort_key,
        )

        if specific_test:
            if prefix_match and specific_test.isdigit():
                matching = [d for d in case_dirs if re.match(rf"^{specific_test}-", d.name)]
            else:
                matching = [d for d in case_dirs if d.name.lower().startswith(specific_test.lower())]
            if not matching:
                raise GraderError(f"no test case matching '{specific_test}'")
            if len(matching) > 1:
                raise GraderError(
                    f"several test cases match '{specific_test}': {', '.join(d.name for d in matching)}"
                )
            return [self._load_single_test(matching[0])]

        if not case_dirs:
            raise GraderError(f"no test cases found in {cases_dir}")
        return [self._load_single_test(d) for d in case_dirs]

    def _load_single_test(self, test_path: Path) -> TestCase:
        with open(test_path / "config.toml", "rb") as f:
            config = tomli.load(f)
        meta = config.get("meta")
        if meta is None:
            raise GraderError(f"{test_path.name}: missing [meta] section")
        for key in ("name", "score"):
            if key not in meta:
                raise GraderError(f"{test_path.name}: missing '{key}' in [meta]")
        if "run" not in config:
            raise GraderError(f"{test_path.name}: missing [[run]] steps")
        return TestCase(path=test_path, meta=meta, run_steps=config["run"])


def _sort_key(path: Path) -> tuple:
    match = re.match(r"(\d+)", path.name)
    if match:
        return (0, int(match.group(1)), path.name)
    return (1, 0, path.name)


def main() -> None:
    parser = argparse.ArgumentParser(description="Run the preemptql test cases")
    parser.add_argument("-j", "--json", action="store_true", help="Output results in JSON format")
    parser.add_argument("-w", "--write-result", action="store_true", help="Write percentage score to .autograder_result")
    parser.add_argument("-p", "--prefix", action="store_true", help="Select the test case by its exact number prefix")
    parser.add_argument("-g", "--group", help="Run all test cases in the given group")
    parser.add_argument("-v", "--verbose", action="store_true", help="Show the output of every step")
    parser.add_argument("-f", "--rerun-failed", action="store_true", help="Only run the test cases that failed last time")
    parser.add_argument("-d", "--dry-run", action="store_true", help="Only show the commands of a single test case")
    parser.add_argument("test", nargs="?", help="Specific test to run")
    args = parser.parse_args()

    if args.dry_run and not args.test:
        print("Error: --dry-run needs a single test case", file=sys.stderr)
        sys.exit(1)

    grader = Grader(verbose=args.verbose, json_output=args.json, dry_run=args.dry_run)
    try:
        if args.rerun_failed:
            failed = grader.failed_paths_from_history()
            if not failed:
                print("No failed test found in last run", file=sys.stderr)
                sys.exit(0)
            total_score, max_score = grader.run_all_tests(specific_paths=failed)
        else:
            total_score, max_score = grader.run_all_tests(args.test, prefix_match=args.prefix, group=args.group)
    except GraderError as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(1)

    if args.dry_run:
        sys.exit(0)
    percentage = total_score / max_score * 100 if max_score > 0 else 0
    if args.write_result:
        Path(".autograder_result").write_text(f"{percentage:.2f}")
    sys.exit(0 if percentage > 0 else 1)


if __name__ == "__main__":
    main()
