class ExportError(Exception):
    """Any condition that invalidates an input file or a single example."""
