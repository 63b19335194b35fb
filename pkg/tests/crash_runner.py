"""Run a mock generation in a child process and SIGKILL it at a chosen point.

usage: crash_runner.py COCO_JSON OUTPUT_ROOT WORKERS MODE N

MODE ``calls``: die right after the N-th backend call returns.
MODE ``video``: die while the N-th video response is being written, after
half its frames exist in the staging directory.
MODE ``none``: run to completion.
"""

import os
import signal
import sys
import threading

from mmforge.backends.mocks import MockVideo
from mmforge.backends.types import StageKind
from mmforge.coco import load_dataset
from mmforge.config import PipelineConfig
from mmforge.orchestrator import build_gateway, execute_run


def die():
    os.kill(os.getpid(), signal.SIGKILL)


class DyingVideo(MockVideo):
    def __init__(self, seed, target):
        super().__init__(seed)
        self.target = target
        self.count = 0
        self.lock = threading.Lock()

    def handle(self, payload, asset_dir):
        with self.lock:
            self.count += 1
            hit = self.count == self.target
        if hit:
            half = dict(payload, num_frames=max(1, int(payload["num_frames"]) // 2))
            super().handle(half, asset_dir)
            die()
        return super().handle(payload, asset_dir)


def main(argv):
    coco, out, workers, mode, n = argv[1], argv[2], int(argv[3]), argv[4], int(argv[5])
    index = load_dataset(coco)
    config = PipelineConfig(output_root=out, seed=7, max_workers=workers, mock=True)
    gateway = build_gateway(config)
    if mode == "video":
        gateway.transports[StageKind.VIDEO] = DyingVideo(config.seed, n)
    elif mode == "calls":
        inner = gateway.call
        lock = threading.Lock()
        state = {"calls": 0}

        def counting_call(request, asset_dir=None):
            reply = inner(request, asset_dir)
            with lock:
                state["calls"] += 1
                if state["calls"] >= n:
                    die()
            return reply

        gateway.call = counting_call
    report = execute_run(config, index, index.image_ids(), gateway=gateway)
    return 0 if report.ok else 1


if __name__ == "__main__":
    sys.exit(main(sys.argv))
