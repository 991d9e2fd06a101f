#!/usr/bin/env python3
"""Export torchvision r3d_18 encoder weights to the covseg archive format.

    export_r3d18_weights.py OUT [--random --seed N] [--probe PROBE_OUT]

Without --random the Kinetics-400 weights are fetched through torchvision.
--probe also writes a second archive with a fixed probe input and the
encoder's stem and stage outputs in evaluation mode, for parity checks.
"""

import argparse
import json
import struct

import torch
from torchvision.models.video import r3d_18

MAGIC = b"COVSEGv1"


def write_archive(path, tensors, meta=None):
    header = {"meta": meta or {}, "tensors": []}
    blobs = []
    offset = 0
    for name, t in tensors:
        data = t.detach().to(torch.float32).contiguous().numpy().astype("<f4").tobytes()
        header["tensors"].append({"name": name, "shape": list(t.shape), "offset": offset})
        blobs.append(data)
        offset += len(data)
    text = json.dumps(header).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(text)))
        f.write(text)
        for b in blobs:
            f.write(b)


def randomize(model, seed):
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, m in model.named_modules():
            if isinstance(m, torch.nn.Conv3d):
                fan_in = m.weight[0].numel()
                m.weight.copy_(torch.randn(m.weight.shape, generator=g) * (2.0 / fan_in) ** 0.5)
            elif isinstance(m, torch.nn.BatchNorm3d):
                m.weight.copy_(0.5 + torch.rand(m.weight.shape, generator=g))
                m.bias.copy_(0.2 * torch.randn(m.bias.shape, generator=g))
                m.running_mean.copy_(0.1 * torch.randn(m.running_mean.shape, generator=g))
                m.running_var.copy_(0.5 + torch.rand(m.running_var.shape, generator=g))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out")
    ap.add_argument("--random", action="store_true")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--probe")
    ap.add_argument("--probe-shape", default="1,3,8,32,32")
    args = ap.parse_args()

    if args.random:
        model = r3d_18(weights=None)
        randomize(model, args.seed)
    else:
        from torchvision.models.video import R3D_18_Weights
        model = r3d_18(weights=R3D_18_Weights.KINETICS400_V1)
    model.eval()

    tensors = [(k, v) for k, v in model.state_dict().items() if not k.endswith("num_batches_tracked")]
    write_archive(args.out, tensors, {"source": "torchvision r3d_18",
                                      "weights": "random" if args.random else "KINETICS400_V1"})
    print(f"wrote {len(tensors)} arrays to {args.out}")

    if args.probe:
        shape = [int(s) for s in args.probe_shape.split(",")]
        g = torch.Generator().manual_seed(args.seed + 1)
        x = torch.rand(shape, generator=g) * 2.0 - 1.0
        with torch.no_grad():
            stem = model.stem(x)
            s1 = model.layer1(stem)
            s2 = model.layer2(s1)
            s3 = model.layer3(s2)
            s4 = model.layer4(s3)
        write_archive(args.probe, [("input", x), ("stem", stem), ("stage1", s1), ("stage2", s2),
                                   ("stage3", s3), ("stage4", s4)], {"kind": "probe"})
        print(f"wrote probe to {args.probe}")


if __name__ == "__main__":
    main()
