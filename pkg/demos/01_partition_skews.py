"""Walk through the three label-skew partitioners on a synthetic dataset.

Run:  python3 demos/01_partition_skews.py
"""

import numpy as np

from fedsim import partition_dirichlet, partition_manual, partition_quantity, synth_blobs


def label_table(ds, partition, title, max_rows=8):
    print(f"\n{title}")
    print("client  size  label histogram")
    for cid, idx in enumerate(partition.assignment[:max_rows]):
        hist = np.bincount(ds.labels[idx], minlength=ds.num_classes)
        bar = " ".join(f"{h:3d}" for h in hist)
        print(f"{cid:6d}  {len(idx):4d}  [{bar}]")
    if partition.num_clients > max_rows:
        print(f"... and {partition.num_clients - max_rows} more clients")


def main():
    ds = synth_blobs(num_classes=5, dim=8, per_class=120, spread=1.0, seed=7)
    print(f"dataset: {len(ds)} samples, {ds.num_classes} classes, dim {ds.dim}")

    # Distribution-based skew: each class is split by Dirichlet proportions.
    # Small beta concentrates a class on few clients; large beta evens out.
    for beta in (0.1, 0.5, 100.0):
        part = partition_dirichlet(ds, num_clients=8, beta=beta, seed=1)
        label_table(ds, part, f"Dirichlet skew, beta={beta}")

    # Quantity-based skew: every client owns exactly two distinct labels.
    part = partition_quantity(ds, num_clients=8, labels_per_client=2, seed=1)
    label_table(ds, part, "Quantity skew, 2 labels per client")

    # Manual groups: full control over which labels go where.
    part = partition_manual(ds, [(3, [0, 1]), (3, [2, 3]), (2, [4])])
    label_table(ds, part, "Manual groups (3+3+2 clients)")


if __name__ == "__main__":
    main()
