# %% [markdown]
# # Comparing the four controllers
#
# Runs every scenario with every controller for 65 h and writes the
# per-step CSVs next to this script. Takes about half a minute.

# %%
from pathlib import Path

from l2halo.scenarios import CONTROLLERS, SCENARIOS, compare, comparison_table, emit_csv, format_table, preset

out = Path(__file__).resolve().parent / "output"
cfgs = [preset(s, ctrl) for s in SCENARIOS for ctrl in CONTROLLERS]
rows = compare(cfgs)
for res, _ in rows:
    emit_csv(res, out / f"{res.config.id}_{res.config.controller}.csv")
print(format_table(comparison_table(rows)))

# %% [markdown]
# "(unexpected)" marks rows whose outcome differs from the reported study:
# a controller that was reported to fail but held station here, or the
# other way round. Failure reasons are kept on each result.

# %%
for res, _ in rows:
    if res.failed:
        print(f"{res.config.id} {res.config.controller}: {res.reason}")
