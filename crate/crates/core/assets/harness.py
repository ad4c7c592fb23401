# Guest harness: seeds `random`, loads the guest source and either runs it as
# __main__ or calls a named entry function. A zero-argument entry is called
# bare; a one-argument entry receives all of stdin. The return value is
# written to stdout (booleans as True/False).
import os
import random
import sys

MEMORY_EXHAUSTED = 86


def arity(fn):
    code = getattr(fn, "__code__", None)
    if code is not None:
        return code.co_argcount - (1 if is_bound(fn) else 0)
    import inspect

    return len(inspect.signature(fn).parameters)


def is_bound(fn):
    return getattr(fn, "__self__", None) is not None


def main():
    source_path = sys.argv[1]
    entry = sys.argv[2] if len(sys.argv) > 2 else ""
    random.seed(int(os.environ.get("GUEST_SEED", "0")))
    with open(source_path, encoding="utf-8") as fh:
        code = compile(fh.read(), source_path, "exec")
    sys.path.insert(0, os.path.dirname(os.path.abspath(source_path)))
    if not entry:
        exec(code, {"__name__": "__main__", "__file__": source_path})
        return 0
    ns = {"__name__": "__guest__", "__file__": source_path}
    exec(code, ns)
    fn = ns.get(entry)
    if not callable(fn):
        sys.stderr.write("entry %s is not defined\n" % entry)
        return 3
    if arity(fn) == 0:
        result = fn()
    else:
        result = fn(sys.stdin.read())
    if result is None:
        sys.stderr.write("entry %s returned None\n" % entry)
        return 4
    if isinstance(result, bool):
        sys.stdout.write("True" if result else "False")
    else:
        sys.stdout.write(str(result))
    return 0


if __name__ == "__main__":
    try:
        code = main()
        sys.stdout.flush()
    except SystemExit:
        raise
    except MemoryError:
        os._exit(MEMORY_EXHAUSTED)
    except BaseException:
        import traceback

        traceback.print_exc()
        code = 1
    sys.exit(code)
