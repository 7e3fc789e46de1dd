#!/usr/bin/env python3
# Copyright (c) 2026, The ugcvqa Authors. All rights reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Writes a torchvision ResNet-50 state_dict as a ugcvqa tensor archive.

    convert_torchvision.py resnet50.pth weights.bin
    convert_torchvision.py --download weights.bin   # torchvision ImageNet weights

The classifier (fc.*) and BN step counters are dropped.
"""

import argparse
import json
import struct

import numpy as np

MAGIC = b"UGCVQAT\0"
VERSION = 1


def write_archive(path, tensors, metadata=None):
    entries, blobs, offset = [], [], 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        entries.append({"name": name, "shape": list(arr.shape), "dtype": "f32",
                        "offset": offset, "nbytes": arr.nbytes})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    header = json.dumps({"metadata": metadata or {}, "tensors": entries}).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IQ", VERSION, len(header)))
        f.write(header)
        for b in blobs:
            f.write(b)


def convert(state_dict):
    out = {}
    for name, t in state_dict.items():
        if name.startswith("fc.") or name.endswith("num_batches_tracked"):
            continue
        out[name] = t.detach().cpu().float().numpy()
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("source", nargs="?", help="state_dict .pth file")
    ap.add_argument("output")
    ap.add_argument("--download", action="store_true",
                    help="fetch torchvision's IMAGENET1K_V1 weights instead")
    args = ap.parse_args()

    import torch
    if args.download:
        import torchvision
        sd = torchvision.models.resnet50(weights="IMAGENET1K_V1").state_dict()
    elif args.source:
        sd = torch.load(args.source, map_location="cpu")
        sd = sd.get("state_dict", sd)
    else:
        ap.error("give a state_dict file or --download")
    tensors = convert(sd)
    write_archive(args.output, tensors, {"source": "torchvision resnet50"})
    print(f"wrote {len(tensors)} tensors to {args.output}")


if __name__ == "__main__":
    main()
