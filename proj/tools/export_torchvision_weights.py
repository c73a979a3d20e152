#!/usr/bin/env python3
"""Export torchvision backbones as plain-dict weight files for `cxr`.

Writes <out>/{resnet50,densenet121,efficientnet_b0}.pt holding
dict(model.state_dict()) without the ImageNet classifier. Point
CXR_WEIGHTS_DIR at <out> afterwards.
"""
import argparse
import pathlib
import sys

import torch
import torchvision

ARCHS = {
    "resnet50": ("resnet50", "ResNet50_Weights", ("fc.",)),
    "densenet121": ("densenet121", "DenseNet121_Weights", ("classifier.",)),
    "efficientnet_b0": ("efficientnet_b0", "EfficientNet_B0_Weights", ("classifier.",)),
}


def backbone_state(arch, pretrained=True):
    ctor, weights_enum, drop = ARCHS[arch]
    weights = getattr(torchvision.models, weights_enum).IMAGENET1K_V1 if pretrained else None
    model = getattr(torchvision.models, ctor)(weights=weights)
    return model, {k: v.detach().clone() for k, v in model.state_dict().items()
                   if not k.startswith(drop)}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True, type=pathlib.Path)
    ap.add_argument("--arch", action="append", choices=sorted(ARCHS),
                    help="repeatable; default exports all three")
    ap.add_argument("--random-init", action="store_true",
                    help="skip the ImageNet download (for offline testing only)")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    torch.manual_seed(args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    for arch in args.arch or sorted(ARCHS):
        _, state = backbone_state(arch, pretrained=not args.random_init)
        path = args.out / f"{arch}.pt"
        torch.save(state, path)
        print(f"{arch}: {len(state)} tensors -> {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
