# module header
import os  # standard library

def copy_all(src, dst):
    """Copy every entry."""
    # walk the tree
    for entry in os.listdir(src):  # each name
        path = os.path.join(src, entry)
        # nothing to skip
        shutil.copy(path, dst)
    return dst  # done
