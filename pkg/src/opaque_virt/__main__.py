"""``python -m opaque_virt``."""

from .cli import main

main()
