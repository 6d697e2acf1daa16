"""Line-oriented ``key = value`` configuration files."""


def parse_key_value(text):
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        values[key.strip()] = value.strip()
    return values


def read_key_value(path):
    with open(path, encoding="utf-8") as fh:
        return parse_key_value(fh.read())


def parse_float_pair(raw):
    parts = raw.replace("[", "").replace("]", "").replace(",", " ").split()
    if len(parts) != 2:
        raise ValueError(f"expected two numbers, got {raw!r}")
    return float(parts[0]), float(parts[1])
