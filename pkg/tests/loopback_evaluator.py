"""Line-protocol test evaluator: one JSON request line in, one response line out.

Modes:
    ok         fixed response {l_gan: 0.7, l_l1: 0.002}
    cheap      loss proportional to the genome's total channel count
    malformed  emits a non-JSON line
    nan        emits l_gan = NaN
    sleep      sleeps 5 s before answering (for timeout tests)
    fail       emits a failed-status response
    crash      exits immediately without answering
"""

import json
import math
import sys
import time


def respond(payload):
    sys.stdout.write(json.dumps(payload) + "\n")
    sys.stdout.flush()


def main():
    mode = sys.argv[1] if len(sys.argv) > 1 else "ok"
    for line in sys.stdin:
        request = json.loads(line)
        if mode == "ok":
            respond({"l_gan": 0.7, "l_l1": 0.002, "status": "ok", "message": ""})
        elif mode == "cheap":
            channels = sum(
                int(v) for v in request["genome"].split("|")[0].split(",")
            )
            respond(
                {"l_gan": channels / 1000.0, "l_l1": 0.0, "status": "ok", "message": ""}
            )
        elif mode == "malformed":
            sys.stdout.write("this is not json\n")
            sys.stdout.flush()
        elif mode == "nan":
            sys.stdout.write(
                '{"l_gan": NaN, "l_l1": 0.0, "status": "ok", "message": ""}\n'
            )
            sys.stdout.flush()
        elif mode == "sleep":
            time.sleep(5)
            respond({"l_gan": 0.7, "l_l1": 0.002, "status": "ok", "message": ""})
        elif mode == "fail":
            respond({"l_gan": 0.0, "l_l1": 0.0, "status": "failed", "message": "boom"})
        elif mode == "crash":
            sys.exit(1)
        else:
            raise SystemExit(f"unknown mode {mode}")


if __name__ == "__main__":
    main()
