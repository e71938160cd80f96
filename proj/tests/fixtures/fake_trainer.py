#!/usr/bin/env python3
"""External trainer stub: loss depends on embed_dim and the epoch count."""
import json
import sys

request = json.load(sys.stdin)
loss = 0.05 + request["embed_dim"] / 10000.0 + 0.01 / request["epochs"]
print(json.dumps({"val_loss": loss, "test_loss": loss + 0.01}))
