# repository root on sys.path, so `common`, `smallball_lab` and `pipelines` import without installing
