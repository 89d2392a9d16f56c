#!/usr/bin/env python3
"""Scriptable stdio embedding provider for exercising the subprocess client.

Speaks the JSON-lines protocol: an optional hello line, then one response
per request. Flags make it misbehave in controlled ways (shuffle answers,
inject errors, stall, crash) so client-side handling can be tested.

Deliberately dependency-free; must not import the package under test.
"""

import argparse
import base64
import hashlib
import json
import math
import sys
import time


def unit_vector(seed: bytes, dim: int) -> list:
    raw = hashlib.shake_256(seed).digest(dim * 4)
    words = [int.from_bytes(raw[i * 4 : (i + 1) * 4], "little") for i in range(dim)]
    vec = [w / (2**32 - 1) * 2.0 - 1.0 for w in words]
    norm = math.sqrt(sum(x * x for x in vec))
    return [x / norm for x in vec]


def constant_vector(dim: int) -> list:
    return [1.0] + [0.0] * (dim - 1)


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--dim", type=int, default=8)
    parser.add_argument("--mode", choices=["hash", "constant"], default="hash")
    parser.add_argument("--no-handshake", action="store_true")
    parser.add_argument("--error-on", default=None, metavar="SUBSTR",
                        help="answer error lines for payloads containing SUBSTR")
    parser.add_argument("--sleep-on", default=None, metavar="SUBSTR",
                        help="stall before answering payloads containing SUBSTR")
    parser.add_argument("--sleep", type=float, default=5.0)
    parser.add_argument("--crash-after", type=int, default=0, metavar="N",
                        help="exit abruptly after answering N requests")
    parser.add_argument("--garbage", action="store_true",
                        help="emit one non-JSON line before the first response")
    args = parser.parse_args()

    out = sys.stdout
    if not args.no_handshake:
        out.write(json.dumps({"hello": {"dim": args.dim, "normalized": True}}) + "\n")
        out.flush()

    answered = 0
    garbage_sent = False

    def respond(req: dict) -> None:
        nonlocal answered, garbage_sent
        if args.garbage and not garbage_sent:
            out.write("this is not json\n")
            garbage_sent = True
        rid = req.get("id")
        kind = req.get("kind")
        if kind == "text":
            payload = req.get("payload", "")
            seed = b"text\x00" + str(payload).encode("utf-8")
        elif kind == "image":
            try:
                data = base64.b64decode(req.get("payload_b64", ""), validate=True)
            except Exception:
                out.write(json.dumps({"id": rid, "error": "bad base64 payload"}) + "\n")
                out.flush()
                return
            payload = data.decode("latin-1")
            seed = b"image\x00" + data
        else:
            out.write(json.dumps({"id": rid, "error": f"unknown kind: {kind}"}) + "\n")
            out.flush()
            return
        if args.error_on is not None and args.error_on in payload:
            out.write(json.dumps({"id": rid, "error": "scripted failure"}) + "\n")
            out.flush()
            return
        if args.sleep_on is not None and args.sleep_on in payload:
            time.sleep(args.sleep)
        if args.mode == "constant":
            vec = constant_vector(args.dim)
        else:
            vec = unit_vector(seed, args.dim)
        out.write(json.dumps({"id": rid, "vector": vec}) + "\n")
        out.flush()
        answered += 1
        if args.crash_after and answered >= args.crash_after:
            sys.exit(7)

    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
        except json.JSONDecodeError:
            out.write(json.dumps({"id": None, "error": "parse"}) + "\n")
            out.flush()
            continue
        respond(req)
    return 0


if __name__ == "__main__":
    sys.exit(main())
