"""Reference evaluator speaking the line protocol on stdin/stdout.

Run as ``python -m lilde.reference_evaluator [--function ackley]``. The
fault and delay switches exist to exercise the optimizer's error handling.
"""

import argparse
import sys
import time

import numpy as np

from .errors import DomainError, ProtocolError
from .objectives import ackley_max
from .protocol import EvalResponse, encode_response, parse_request

FUNCTIONS = {
    "ackley": lambda x: float(ackley_max(np.asarray(x))),
    "sphere": lambda x: -float(np.dot(x, x)),
}


def serve(function, stdin, stdout, fault_every=0, delay=0.0):
    dimension = None
    served = 0
    for line in stdin:
        verb = line.split(" ", 1)[0].strip()
        if verb == "INIT":
            dimension = int(line.split()[1])
            stdout.write("READY\n")
        elif verb == "EVAL":
            req = parse_request(line)
            served += 1
            if delay:
                time.sleep(delay)
            if dimension is not None and len(req.x) != dimension:
                resp = EvalResponse(req.id, fault=f"expected {dimension} components")
            elif fault_every and served % fault_every == 0:
                resp = EvalResponse(req.id, fault="injected fault")
            else:
                try:
                    resp = EvalResponse(req.id, value=function(req.x))
                except DomainError as exc:
                    resp = EvalResponse(req.id, fault=str(exc))
            stdout.write(encode_response(resp))
        elif verb == "SHUTDOWN":
            break
        elif verb:
            raise ProtocolError(f"unexpected line {line!r}", line=line)
        stdout.flush()


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--function", choices=sorted(FUNCTIONS), default="ackley")
    parser.add_argument("--fault-every", type=int, default=0,
                        help="reply FAULT to every n-th request")
    parser.add_argument("--delay", type=float, default=0.0,
                        help="seconds to sleep before each reply")
    args = parser.parse_args(argv)
    serve(FUNCTIONS[args.function], sys.stdin, sys.stdout, args.fault_every, args.delay)


if __name__ == "__main__":
    main()
