"""Self-provisioning environment for the grader and the preemptql CLI.

If the packages in requirements.txt are not importable, create `.venv`,
install them from the fastest reachable PyPI mirror and re-exec the current
command inside the virtualenv.
"""

import os
import subprocess
import sys
import time
import urllib.request
import venv
from concurrent.futures import ThreadPoolExecutor, as_completed
from pathlib import Path
from urllib.parse import urlparse

VENV_DIR_NAME = ".venv"
REQUIREMENTS_FILE = "requirements.txt"
# import names, which differ from distribution names only in letter case here
REQUIRED_IMPORTS = ["rich", "tomli", "rdflib", "starlette", "uvicorn", "requests", "numpy"]

PYPI_MIRRORS = {
    "Official": "https://pypi.org/simple",
    "Tsinghua": "https://pypi.tuna.tsinghua.edu.cn/simple",
    "Aliyun": "https://mirrors.aliyun.com/pypi/simple",
    "Tencent": "https://mirrors.cloud.tencent.com/pypi/simple",
}


def get_venv_paths(root_dir: Path):
    venv_dir = root_dir / VENV_DIR_NAME
    bin_dir = venv_dir / ("Scripts" if sys.platform == "win32" else "bin")
    suffix = ".exe" if sys.platform == "win32" else ""
    return venv_dir, bin_dir / f"python{suffix}", bin_dir / f"pip{suffix}"


def check_venv_integrity(python_executable: Path) -> bool:
    """Whether the venv interpreter can import every required package."""
    if not python_executable.exists():
        return False
    check_script = "; ".join(f"import {pkg}" for pkg in REQUIRED_IMPORTS)
    result = subprocess.run(
        [str(python_executable), "-c", check_script],
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
    )
    return result.returncode == 0


def mirror_latency(name: str, url: str, timeout: float = 2):
    start_time = time.time()
    try:
        request = urllib.request.Request(url, method="HEAD")
        with urllib.request.urlopen(request, timeout=timeout) as response:
            if response.status == 200:
                return name, url, (time.time() - start_time) * 1000
    except Exception:
        pass
    return name, url, float("inf")


def fastest_mirror() -> str:
    print("[Bootstrap] Selecting the fastest PyPI mirror...", flush=True)
    best = ("Official", PYPI_MIRRORS["Official"], float("inf"))
    with ThreadPoolExecutor(max_workers=len(PYPI_MIRRORS)) as executor:
        futures = [executor.submit(mirror_latency, name, url) for name, url in PYPI_MIRRORS.items()]
        for future in as_completed(futures):
            result = future.result()
            if result[2] < best[2]:
                best = result
    if best[2] == float("inf"):
        print("[Bootstrap] Warning: no mirror answered, using the official index.", flush=True)
    else:
        print(f"[Bootstrap] Selected {best[0]} ({best[2]:.0f} ms)", flush=True)
    return best[1]


def install_dependencies(root_dir: Path, pip_executable: Path) -> None:
    mirror_url = fastest_mirror()
    command = [str(pip_executable), "install", "--disable-pip-version-check", "-i", mirror_url]
    if "pypi.org" not in mirror_url:
        command.extend(["--trusted-host", urlparse(mirror_url).hostname])
    print("[Bootstrap] Installing dependencies...", flush=True)
    try:
        subprocess.run(command + ["-r", str(root_dir / REQUIREMENTS_FILE)], check=True)
    except subprocess.CalledProcessError:
        print("[Bootstrap] Error: failed to install dependencies.", file=sys.stderr)
        sys.exit(1)


def restart_in_venv(python_executable: Path) -> None:
    env = os.environ.copy()
    env["PREEMPTQL_BOOTSTRAPPED"] = "1"
    args = [str(python_executable)] + sys.argv
    if sys.platform == "win32":
        sys.exit(subprocess.run(args, env=env).returncode)
    os.execve(str(python_executable), args, env)


def initialize() -> None:
    try:
        for pkg in REQUIRED_IMPORTS:
            __import__(pkg)
        return
    except ImportError:
        pass

    root_dir = Path(__file__).parent.absolute()
    venv_dir, venv_python, venv_pip = get_venv_paths(root_dir)

    # already re-executed once: the venv is broken, repair it in place
    if os.environ.get("PREEMPTQL_BOOTSTRAPPED") == "1":
        print("[Bootstrap] In venv but dependencies missing. Repairing...", flush=True)
        install_dependencies(root_dir, venv_pip)
        return

    if not venv_dir.exists():
        print(f"[Bootstrap] Creating virtual environment at {venv_dir}...", flush=True)
        venv.create(venv_dir, with_pip=True)
    if not check_venv_integrity(venv_python):
        install_dependencies(root_dir, venv_pip)
    restart_in_venv(venv_python)


if __name__ == "__main__":
    initialize()
    print("[Bootstrap] Environment is ready.")
