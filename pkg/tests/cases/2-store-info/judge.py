import json
import sys
from pathlib import Path

from preemptql.store import load_ntriples


def judge():
    data = json.load(sys.stdin)
    try:
        info = json.loads(data["stdout"])
    except ValueError:
        print(json.dumps({"success": False, "message": "store info did not print JSON"}))
        return
    store = load_ntriples(Path(data["test_dir"]) / "data.nt")
    expected = {
        "triples": len(store),
        "fingerprint": store.fingerprint.hex(),
        "checksums": store.checksums,
    }
    for key, value in expected.items():
        if info.get(key) != value:
            print(json.dumps({"success": False, "message": f"{key}: expected {value}, got {info.get(key)}"}))
            return
    if sorted(info["checksums"]) != ["osp", "pos", "spo"]:
        print(json.dumps({"success": False, "message": "expected one checksum per index"}))
        return
    print(json.dumps({"success": True, "message": "store info matches the loaded store"}))


if __name__ == "__main__":
    judge()
