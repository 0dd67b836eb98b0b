"""
Echo adapter: answers every request with fixed logits.

Usage:
    python models/echo_adapter.py 0.1 0.9             # fixed logits
    python models/echo_adapter.py --mismatch 0.1 0.9  # reply with a wrong id
    python models/echo_adapter.py --die 0.1 0.9       # exit on the first request
    python models/echo_adapter.py --garbage 0.1 0.9   # reply with non-JSON
    python models/echo_adapter.py --mean-red          # logits = [mean red, mean blue] of the image
"""

import base64
import json
import sys


def _mean_channels(message: dict):
    image = message["image"]
    raw = base64.b64decode(image["rgb_b64"])
    pixels = len(raw) // 3
    red = sum(raw[0::3]) / pixels / 255.0
    blue = sum(raw[2::3]) / pixels / 255.0
    return [red, blue]


def main(argv) -> int:
    flags = {a for a in argv if a.startswith("--")}
    logits = [float(a) for a in argv if not a.startswith("--")]

    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        if "--die" in flags:
            return 3
        try:
            message = json.loads(line)
        except json.JSONDecodeError:
            sys.stderr.write("echo adapter: invalid JSON request\n")
            sys.stderr.flush()
            continue
        if "--garbage" in flags:
            sys.stdout.write("not json\n")
            sys.stdout.flush()
            continue
        request_id = message.get("id")
        if "--mismatch" in flags:
            request_id = request_id + 1
        values = _mean_channels(message) if "--mean-red" in flags else logits
        sys.stdout.write(json.dumps({"id": request_id, "logits": values}) + "\n")
        sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
