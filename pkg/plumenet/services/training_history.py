"""
Training History
Per-epoch records kept in memory and written as CSV (the run record) plus
a JSON-lines event log of resource usage
"""

import os
import csv
import json
import logging
from dataclasses import dataclass, asdict
from typing import Dict, List, Optional

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("epoch", "train_loss", "val_loss", "lr", "val_f1")
TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%SZ"


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float
    val_f1: Optional[float]


class TrainHistory:
    """
    Ordered epoch records.

    The CSV holds only deterministic columns so two runs with the same seed
    produce identical files; the UTC end-of-epoch timestamp, wall time and
    memory go to ``resources``.
    """

    def __init__(self):
        self.records: List[EpochRecord] = []
        self.resources: List[Dict] = []
        self.meta: Dict = {}

    def __len__(self):
        return len(self.records)

    def record(self, record: EpochRecord, resources: Optional[Dict] = None):
        self.records.append(record)
        if resources is not None:
            self.resources.append({"epoch": record.epoch, **resources})

    def column(self, name: str) -> List:
        return [getattr(r, name) for r in self.records]

    def lr_drops(self) -> List[int]:
        """Epochs whose lr is lower than the previous epoch's"""
        lrs = self.column("lr")
        return [self.records[i].epoch for i in range(1, len(lrs)) if lrs[i] < lrs[i - 1]]

    def save_csv(self, path: str):
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for r in self.records:
                writer.writerow([
                    r.epoch,
                    repr(float(r.train_loss)),
                    repr(float(r.val_loss)),
                    repr(float(r.lr)),
                    "" if r.val_f1 is None else repr(float(r.val_f1)),
                ])
        logger.info(f"[TRAINER] History written to {path}")

    def save_resources(self, path: str):
        """One JSON object per epoch (timestamp, wall time, RSS); not byte-reproducible"""
        with open(path, "w", encoding="utf-8") as f:
            for item in self.resources:
                f.write(json.dumps(item, sort_keys=True) + "\n")

    @classmethod
    def load_csv(cls, path: str) -> "TrainHistory":
        history = cls()
        with open(path, "r", encoding="utf-8", newline="") as f:
            for row in csv.DictReader(f):
                history.records.append(EpochRecord(
                    epoch=int(row["epoch"]),
                    train_loss=float(row["train_loss"]),
                    val_loss=float(row["val_loss"]),
                    lr=float(row["lr"]),
                    val_f1=float(row["val_f1"]) if row["val_f1"] else None,
                ))
        return history

    def to_dicts(self) -> List[Dict]:
        return [asdict(r) for r in self.records]
