"""Where do the gradients of a pooling stack land?

Runs each two-operator stack on one random 6×6 window, prints the mask of
input positions that receive gradient, and says whether those positions
stay inside a single aligned cell.
"""
import numpy as np

from poolroutes import pooling as P

rng = np.random.default_rng(0)
x = rng.standard_normal((1, 1, 6, 6))

for text in ["AP3,MP2", "MP3,AP2", "AP2,MP3", "MP2,AP3"]:
    stack = P.parse_stack(text)
    mask = P.route_mask(stack, x)
    rep, = P.route_report(mask, P.reduction(stack), P.stack_cell(stack))
    print(f"{text}: {rep.count} routes, {rep.classification}")
    for row in mask[0, 0]:
        print("   " + " ".join("#" if v else "." for v in row))

# Max pools compose exactly; order only matters once averages are mixed in.
y1 = P.stack_forward([P.MP(2), P.MP(3)], x)[0]
y2 = P.pool_forward(P.MP(6), x)[0]
print("MP2 then MP3 equals MP6:", np.array_equal(y1, y2))
