"""
mmflow preset registry

Named run configurations, one per acceptance scenario, stored as versioned INI
files next to this module.

Copyright (C) 2026 mmflow developers
"""

import io
import os


class UnknownPreset(Exception):
    """
    unknown preset name
    """


presets = {
    "shrink-disk-identity":    "256x256 disk r0=0.35, G(s)=s, radius vs sqrt(r0^2-2t) within 3 dx",
    "shrink-disk-moving":      "128x128 disk r0=0.4, h=0.008, ring-per-step regime, radius within 8 dx",
    "shrink-disk-power":       "256x256 disk r0=0.35, G(s)=sign(s)|s|^(1/3), radius within 4 dx",
    "clamp-speed-bound":       "clamped speed M=2, per-step displacement within c_psi M h + 2 dx, 200 steps",
    "shrinking-negative-part": "G(s)=min(s,0) on a multi-blob set, nonincreasing sets, 100 steps",
    "level-tracking-disk":     "cone on 64 levels, set and function evolutions agree for 20 steps",
    "forcing-equilibrium":     "f=4 on the r*=0.25 disk, radius drift within 3 dx (2 dx finite differences)",
    "fractional-barrier":      "fractional kernel s=0.5 disk above the inward barrier ball",
    "fd-crosscheck-disk":      "256x256 disk, scheme vs finite differences within 4 dx at 10 times",
    "fd-crosscheck-moving":    "128x128 disk, 1.28 cells per step, scheme vs finite differences within 7 dx",
    "h-refinement-disk":       "cone with h in {4h0, 2h0, h0}, h0=2.5e-4, gaps to finest nonincreasing"
    }


def preset_path(name):
    """return the path of the INI file of a preset"""
    if name not in presets:
        raise UnknownPreset("unknown preset %r, choose one of: %s" % (name, ", ".join(sorted(presets))))
    return os.path.join(os.path.dirname(os.path.abspath(__file__)), 'presets', name + '.ini')


def preset_text(name):
    """return the configuration text of a preset"""
    with io.open(preset_path(name), encoding='utf-8') as f:
        return f.read()


def help():
    """return a printable list of presets"""
    width = max(len(name) for name in presets)
    return "\n".join("%s  %s" % (name.ljust(width), presets[name]) for name in sorted(presets))
