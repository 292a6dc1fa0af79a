from pathlib import Path


def output_path(base_dir: Path, *args: str, ext: str = "csv") -> Path:
    """Construct an output file path from the given name components.

    Args:
        base_dir: Directory the file goes into.
        *args: Name components joined with hyphens (e.g., "vanish", "4-AR(2)").
            At least one component is required.
        ext: File extension without the dot.

    Returns:
        Path object pointing to base_dir/component1-component2-....ext.

    Raises:
        ValueError: If no name components are provided.

    Example:
        >>> output_path(Path("output"), "calibrate", "t200")
        Path("output/calibrate-t200.csv")
    """
    if not args:
        raise ValueError("At least one path component is required")

    stem = "-".join(args).lstrip("/")
    safe = "".join(c if c.isalnum() or c in "-_." else "_" for c in stem)
    return base_dir / f"{safe}.{ext}"


def parse_int_list(raw: str) -> list[int]:
    """Parse a comma-separated list of integers such as ``"1,2,5-8"``.

    Ranges ``a-b`` are inclusive; negative numbers are not supported.

    Raises:
        ValueError: If an item is not an integer or a valid range.
    """
    values: list[int] = []
    for item in raw.split(","):
        item = item.strip()
        if not item:
            continue
        if "-" in item:
            start, _, end = item.partition("-")
            lo, hi = int(start), int(end)
            if hi < lo:
                raise ValueError(f"Empty range: {item}")
            values.extend(range(lo, hi + 1))
        else:
            values.append(int(item))
    if not values:
        raise ValueError(f"No integers in {raw!r}")
    return values
