"""Scriptable stand-in for an external detector/OCR backend.

usage: mock_backend.py MODE [ARG]

modes
  fixed     always one box {"x0":0,"y0":0,"x1":2,"y1":2,"score":0.9,"label":"mark"}
  box       one box from ARG = "x0,y0,x1,y1,score"
  empty     no detections
  multi     three boxes with scores 0.2, 0.9, 0.5
  mirror    one box covering the whole request image, label = request id
  truncated half a JSON line without newline, then exit 0
  garbage   a line that is not JSON
  badid     answers with id + 1
  baddet    a detection missing y1
  crash     exit status 3 without answering
  ocr       OCR answer {"text": ARG, "scores": [0.5, ...]}
  count     on the Nth request (N = ARG) exit 4; before that, mirror
"""

import json
import sys


def main():
    mode = sys.argv[1]
    arg = sys.argv[2] if len(sys.argv) > 2 else None
    if mode == "crash":
        sys.exit(3)
    seen = 0
    for line in sys.stdin:
        req = json.loads(line)
        seen += 1
        rid = req["id"]
        out = {"id": rid, "detections": []}
        if mode == "fixed":
            out["detections"] = [{"x0": 0, "y0": 0, "x1": 2, "y1": 2, "score": 0.9, "label": "mark"}]
        elif mode == "box":
            x0, y0, x1, y1, score = arg.split(",")
            out["detections"] = [{"x0": int(x0), "y0": int(y0), "x1": int(x1), "y1": int(y1),
                                  "score": float(score), "label": "plate"}]
        elif mode == "multi":
            out["detections"] = [
                {"x0": 0, "y0": 0, "x1": 1, "y1": 1, "score": 0.2, "label": "a"},
                {"x0": 1, "y0": 1, "x1": 3, "y1": 3, "score": 0.9, "label": "b"},
                {"x0": 2, "y0": 0, "x1": 4, "y1": 2, "score": 0.5, "label": "c", "extra": 1},
            ]
        elif mode in ("mirror", "count"):
            if mode == "count" and seen == int(arg):
                sys.exit(4)
            out["detections"] = [{"x0": 0, "y0": 0, "x1": req["width"], "y1": req["height"],
                                  "score": 1.0, "label": str(rid)}]
        elif mode == "truncated":
            sys.stdout.write('{"id": %d, "detections": [' % rid)
            sys.stdout.flush()
            return
        elif mode == "garbage":
            sys.stdout.write("this is not json\n")
            sys.stdout.flush()
            continue
        elif mode == "badid":
            out["id"] = rid + 1
        elif mode == "baddet":
            out["detections"] = [{"x0": 0, "y0": 0, "x1": 2, "score": 0.5, "label": "x"}]
        elif mode == "ocr":
            out = {"id": rid, "text": arg, "scores": [0.5] * len(arg), "backend": "mock"}
        sys.stdout.write(json.dumps(out) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
