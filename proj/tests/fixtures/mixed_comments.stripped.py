import os

def copy_all(src, dst):
    for entry in os.listdir(src):
        path = os.path.join(src, entry)
        shutil.copy(path, dst)
    return dst
