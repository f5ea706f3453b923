import os
from pathlib import Path
from typing import List

LEVEL_SUFFIX = '.level'


def ensure_directory_exists(directory_path: str) -> bool:
    """Ensure a directory exists and is writable, create if it doesn't"""
    try:
        Path(directory_path).mkdir(parents=True, exist_ok=True)
        return os.access(directory_path, os.W_OK)
    except OSError:
        return False


def clean_filename(filename: str) -> str:
    """Make a preset or run name safe to use as a path component"""
    clean_name = os.path.basename(filename)
    for char in ['/', '\\', ':', '*', '?', '"', '<', '>', '|', ' ']:
        clean_name = clean_name.replace(char, '_')
    return clean_name[:255]


def level_filename(index: int) -> str:
    return f'level_{index:05d}{LEVEL_SUFFIX}'


def list_level_files(directory_path: str) -> List[Path]:
    return sorted(Path(directory_path).glob(f'*{LEVEL_SUFFIX}'))
