"""Interval geometry walkthrough: normalized (center, width) boxes, character
spans, and the IoU family that drives both matching and the loss."""

from spandet.geometry import (CharSpan, Interval, cw_to_span, giou_1d, iou_1d,
                              span_l1, span_to_cw)

text = "The quick brown fox jumps over the lazy dog and keeps going."
print(f"text ({len(text)} chars): {text!r}\n")

# A detector emits normalized intervals; converting to characters is a
# round-half-away projection with clamping.
iv = Interval(c=0.75, w=0.5)
span = cw_to_span(iv, len(text))
print(f"normalized {iv} -> characters {span}: {text[span.x1:span.x2]!r}")

# Character annotations normalize losslessly: the round trip is exact.
gt = CharSpan(20, 45)
back = cw_to_span(span_to_cw(gt, len(text)), len(text))
print(f"round trip {gt} -> {span_to_cw(gt, len(text))} -> {back}\n")

# IoU measures overlap; gIoU extends it with a hull penalty so that even
# disjoint intervals produce a useful gradient signal.
a, b = Interval(0.25, 0.5), Interval(0.5, 0.5)
print(f"overlapping:  iou={iou_1d(a, b):.4f}  giou={giou_1d(a, b):.4f}")
far = Interval(0.9, 0.2)
print(f"disjoint:     iou={iou_1d(a, far):.4f}  giou={giou_1d(a, far):.4f}")
print(f"identical:    iou={iou_1d(a, a):.4f}  giou={giou_1d(a, a):.4f}")

# The span L1 distance works directly on (c, w) pairs.
print(f"\nspan L1 between {a} and {b}: {span_l1(a, b):.3f}")
print("gIoU never exceeds IoU; they coincide exactly when the hull has no gap.")
