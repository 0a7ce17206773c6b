"""Print the published learning-rate schedules for the two parameter groups.

The conv and FC groups decay out of phase in several tables; this makes the
offset visible.
"""
from poolroutes.optim import HYPER_NAMES, hyper_table, lr_at_epoch

for name in HYPER_NAMES:
    h = hyper_table(name)
    print(f"{name} ({h.epochs} epochs)")
    for group, g in h.groups.items():
        events = g.schedule.events(100)
        rates = [f"{lr_at_epoch(g.schedule, e):.2e}" for e in (0, 50, 100)]
        print(f"  {group}: decays at {events} ... lr at 0/50/100 = {rates}")
    if h.single_group:
        print("  (one schedule shared by all parameters)")
