"""Regenerate segmentation_74.json: published per-class rows plus synthetic filler classes
chosen so the class means and the improved/degraded/unchanged tally match the published totals."""
import json, random
from pathlib import Path
COCO = ["person","bicycle","car","motorcycle","airplane","bus","train","truck","boat","traffic light","fire hydrant",
"stop sign","parking meter","bench","bird","cat","dog","horse","sheep","cow","elephant","bear","zebra","giraffe",
"backpack","umbrella","handbag","tie","suitcase","frisbee","skis","snowboard","sports ball","kite","baseball bat",
"baseball glove","skateboard","surfboard","tennis racket","bottle","wine glass","cup","fork","knife","spoon","bowl",
"banana","apple","sandwich","orange","broccoli","carrot","hot dog","pizza","donut","cake","chair","couch",
"potted plant","bed","dining table","toilet","tv","laptop","mouse","remote","keyboard","cell phone","microwave",
"oven","toaster","sink","refrigerator","book","clock","vase","scissors","teddy bear","hair drier","toothbrush"]
classes = COCO[:74]
U = 10000
pub_b = {"toilet":.10,"sink":.13,"bed":.06,"bicycle":.26,"car":.09,"dog":.46,"microwave":.81,"apple":.80,"cake":.91,"knife":.69,"train":.73,"surfboard":.69}
pub_o = {"toilet":.79,"sink":.87,"bed":.99,"bicycle":.83,"car":.56,"dog":.75,"microwave":.68,"apple":.74,"cake":.55,"knife":.60,"train":.45,"surfboard":.28}
pub_2k = {"toilet":.10,"sink":.15,"bed":.50,"bicycle":.65,"car":.20,"dog":.48,"microwave":.84,"cake":.77,"knife":.62,"train":.74,"surfboard":.58}
rest = [c for c in classes if c not in pub_b]
assert len(rest) == 62
def attempt(seed):
    rng = random.Random(seed)
    order = rest[:]; rng.shuffle(order)
    imp, deg, unc = order[:30], order[30:50], order[50:]
    b, o = {}, {}
    for c in imp:
        b[c] = rng.randint(1500, 6000); o[c] = min(U, b[c] + rng.randint(300, 3000))
    for i, c in enumerate(deg):
        b[c] = rng.randint(3000, 8000)
        o[c] = 0 if i < 3 else max(0, b[c] - rng.randint(300, 2500))
    for c in unc:
        b[c] = o[c] = rng.randint(2000, 8000)
    B = round(.4711 * 74 * U) - round(sum(pub_b.values()) * U)
    O = round(.5239 * 74 * U) - round(sum(pub_o.values()) * U)
    s = B - sum(b.values())
    for i, c in enumerate(unc):
        d = s // 12 + (1 if i < s % 12 else 0)
        b[c] += d; o[c] += d
    t = O - sum(o.values())
    for i, c in enumerate(imp):
        o[c] += t // 30 + (1 if i < t % 30 else 0)
    ok = all(0 <= b[c] <= U and 0 <= o[c] <= U for c in rest)
    ok &= all(o[c] - b[c] >= 100 for c in imp) and all(b[c] - o[c] >= 100 for c in deg)
    return ok, b, o
for seed in range(1000):
    ok, b, o = attempt(seed)
    if ok: break
print("seed", seed)
# 2K column: published 11 plus 63 synthetic values, summing to 0.4694 * 74
rng = random.Random(seed)
k2 = {}
rest2 = [c for c in classes if c not in pub_2k]
for c in rest2:
    k2[c] = min(U, max(0, b.get(c, round(pub_b.get(c, .5) * U)) + rng.randint(-300, 600)))
T = round(.4694 * 74 * U) - round(sum(pub_2k.values()) * U)
r = T - sum(k2.values())
for i, c in enumerate(rest2):
    k2[c] += r // 63 + (1 if i < r % 63 else 0)
assert all(0 <= v <= U for v in k2.values())
f = lambda d: {c: d[c] / U for c in classes}
base = f({**{c: round(v * U) for c, v in pub_b.items()}, **b})
five = f({**{c: round(v * U) for c, v in pub_o.items()}, **o})
two = f({**{c: round(v * U) for c, v in pub_2k.items()}, **k2})
json.dump({"classes": classes, "published_main": sorted(pub_b), "published_scale": sorted(pub_2k),
           "baseline": base, "synthetic_5k": five, "synthetic_2k": two},
          open(Path(__file__).with_name("segmentation_74.json"), "w"), indent=1)
