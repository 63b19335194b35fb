#!/usr/bin/env python
# Masks, run-length encoding and IoU.
#
# Masks are stored as uncompressed COCO-style RLE: counts alternate between
# background and foreground runs, scanned column by column, and always start
# with a background run (which may be zero).

import numpy as np

from mmforge.masks import BinaryMask, MaskTrack, iou, merge_instances, rle_decode, rle_encode, track_diagnostics

# A 2x2 mask whose column-major bits are 0,1,1,0.
m = BinaryMask([[0, 1], [1, 0]])
print("2x2 counts:", rle_encode(m).counts)
print("all foreground:", rle_encode(BinaryMask(np.ones((2, 2), bool))).counts)

# Round trip a random mask.
rng = np.random.default_rng(0)
big = BinaryMask(rng.random((48, 64)) < 0.3)
r = rle_encode(big)
print(f"48x64 mask -> {len(r.counts)} runs, sum {sum(r.counts)}, round trip ok:",
      np.array_equal(rle_decode(r).bits, big.bits))

# IoU of two overlapping boxes; two empty masks count as a perfect match.
a = BinaryMask.from_box(8, 8, 0, 0, 4, 4)
b = BinaryMask.from_box(8, 8, 2, 2, 4, 4)
print(f"iou(a, b) = {iou(a, b):.4f}")
print("iou(empty, empty) =", iou(BinaryMask.zeros(8, 8), BinaryMask.zeros(8, 8)))

# Instances of the same class merge into one per-class mask.
merged = merge_instances([("dog", a), ("dog", b), ("cat", BinaryMask.zeros(8, 8))])
print({k: int(v.bits.sum()) for k, v in merged.items()})

# A track is one RLE per frame; diagnostics flag empty frames and area jumps.
track = MaskTrack(1, "dog", [rle_encode(a), rle_encode(b), rle_encode(BinaryMask.zeros(8, 8))])
print(track_diagnostics(track))
