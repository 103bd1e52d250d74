"""Query-latency scaling: brute-force k-NN cost grows with the dataset,
inverted-index pre-filtering keeps it down.

This is the miniature version; the full curve (sizes up to 5000, dim 128)
runs via `bhakti bench --out fig.csv --dat fig.dat` and takes a few
minutes on a laptop. Feed the .dat file to gnuplot:

    plot "fig.dat" using 1:2 with lines title "unfiltered", \\
         "fig.dat" using 1:3 with lines title "filtered"
"""

from bhakti.bench import BenchConfig, run_bench

config = BenchConfig(
    sizes=(1, 500, 1000, 2000),
    dim=64,
    k=10,
    repeats=10,
    selectivity=0.1,  # the filter keeps 10% of documents
    seed=0,
)
rows = run_bench(config, out_csv="demo_bench.csv", out_dat="demo_bench.dat")

print(f"{'size':>6} {'mode':>12} {'mean_ms':>10} {'p50_ms':>10} {'p95_ms':>10}")
for row in rows:
    print(f"{row.size:>6} {row.mode:>12} {row.mean_ms:>10.3f} {row.p50_ms:>10.3f} {row.p95_ms:>10.3f}")

unf = {r.size: r.mean_ms for r in rows if r.mode == "unfiltered"}
flt = {r.size: r.mean_ms for r in rows if r.mode == "filtered"}
print("\nfull scans grow with size:", " -> ".join(f"{unf[s]:.2f}ms" for s in sorted(unf)))
biggest = max(unf)
print(f"at size {biggest}: filtered is {unf[biggest] / flt[biggest]:.1f}x faster than unfiltered")
print("\nwrote demo_bench.csv and demo_bench.dat")
