// In-process guard shim handed to `python3 -I -c`. It runs inside the job
// process itself: argv[1] is the program file, argv[2] the timeout in ms,
// argv[3] the memory cap in bytes.
//
// The shim parks the real stdout on a spare descriptor and points fd 1 at
// the stderr pipe before any user statement runs, so nothing the program
// prints can reach the supervisor's result channel. Capability guards are
// monkeypatched sabotage, not a kernel sandbox: good enough for grading
// model-written string code, not for hostile input.

export const WRAPPER_SOURCE = String.raw`import json
import os
import resource
import sys
import traceback

RESULT_FD = os.dup(1)
os.dup2(2, 1)

PROG = sys.argv[1]
TIMEOUT_MS = int(sys.argv[2])
MEM_CAP = int(sys.argv[3])

SCRATCH = os.path.realpath(os.getcwd())


class Forbidden(Exception):
    pass


def send(status, answer=None, detail=""):
    body = json.dumps({"status": status, "answer": answer,
                       "detail": detail[-2000:]}, ensure_ascii=False)
    data = (body + "\n").encode("utf-8")
    while data:
        data = data[os.write(RESULT_FD, data):]


def deny(what):
    def guard(*args, **kwargs):
        raise Forbidden("forbidden: " + what)
    return guard


def inside_scratch(path):
    try:
        p = os.path.realpath(os.fspath(path))
    except TypeError:
        return True
    if isinstance(p, bytes):
        p = p.decode("utf-8", "surrogateescape")
    return p == SCRATCH or p.startswith(SCRATCH + os.sep)


def apply_limits():
    # below ~32 MiB the interpreter itself cannot run, so treat that as a floor
    mem = max(MEM_CAP, 32 * 1024 * 1024)
    resource.setrlimit(resource.RLIMIT_AS, (mem, mem))
    # CPU backstop in case the supervisor dies; the wall clock timer fires first
    cpu = TIMEOUT_MS // 1000 + 2
    resource.setrlimit(resource.RLIMIT_CPU, (cpu, cpu + 1))
    cap = 64 * 1024 * 1024
    resource.setrlimit(resource.RLIMIT_FSIZE, (cap, cap))


class ImportGate:
    """Meta-path hook so deleting a sabotaged module from sys.modules and
    re-importing it cannot restore the real capability."""

    BLOCKED = ("_socket", "_ctypes", "ctypes", "_posixsubprocess")

    def find_spec(self, fullname, path=None, target=None):
        if fullname.split(".")[0] in self.BLOCKED:
            raise Forbidden("forbidden: import of " + fullname)
        return None


def install_guards():
    import builtins
    import importlib
    import io
    import pathlib
    import socket
    import _socket
    import subprocess

    sys.meta_path.insert(0, ImportGate())
    importlib.reload = deny("module reloading")

    for mod in (socket, _socket):
        for name in ("socket", "socketpair", "fromfd", "create_connection",
                     "create_server", "getaddrinfo", "gethostbyname",
                     "gethostbyname_ex", "gethostbyaddr", "getnameinfo",
                     "dup"):
            if hasattr(mod, name):
                setattr(mod, name, deny("network access"))

    for name in ("Popen", "run", "call", "check_call", "check_output",
                 "getoutput", "getstatusoutput"):
        setattr(subprocess, name, deny("process spawning"))
    for name in ("system", "popen", "fork", "forkpty", "posix_spawn",
                 "posix_spawnp", "execv", "execve", "execvp", "execvpe",
                 "execl", "execle", "execlp", "execlpe", "spawnl",
                 "spawnle", "spawnlp", "spawnlpe", "spawnv", "spawnve",
                 "spawnvp", "spawnvpe", "kill", "killpg"):
        if hasattr(os, name):
            setattr(os, name, deny("process spawning"))
    for name in ("ctypes", "_ctypes", "_posixsubprocess"):
        sys.modules[name] = None

    real_open = builtins.open
    real_os_open = os.open

    def guarded_open(file, mode="r", *args, **kwargs):
        if (isinstance(file, (str, bytes, os.PathLike))
                and any(c in str(mode) for c in "wax+")
                and not inside_scratch(file)):
            raise Forbidden("forbidden: write outside the scratch directory")
        return real_open(file, mode, *args, **kwargs)

    write_flags = (os.O_WRONLY | os.O_RDWR | os.O_APPEND
                   | os.O_CREAT | os.O_TRUNC)

    def guarded_os_open(path, flags, *args, **kwargs):
        if flags & write_flags and not inside_scratch(path):
            raise Forbidden("forbidden: write outside the scratch directory")
        return real_os_open(path, flags, *args, **kwargs)

    def path_guard(real):
        def guard(*args, **kwargs):
            for arg in args:
                if (isinstance(arg, (str, bytes, os.PathLike))
                        and not inside_scratch(arg)):
                    raise Forbidden(
                        "forbidden: write outside the scratch directory")
            return real(*args, **kwargs)
        return guard

    real_fileio = io.FileIO

    class GuardedFileIO(real_fileio):
        def __init__(self, file, mode="r", *args, **kwargs):
            if (isinstance(file, (str, bytes, os.PathLike))
                    and any(c in str(mode) for c in "wax+")
                    and not inside_scratch(file)):
                raise Forbidden(
                    "forbidden: write outside the scratch directory")
            super().__init__(file, mode, *args, **kwargs)

    builtins.open = guarded_open
    io.open = guarded_open
    io.FileIO = GuardedFileIO
    sys.modules["_io"].FileIO = GuardedFileIO
    os.open = guarded_os_open
    for name in ("unlink", "remove", "rename", "replace", "rmdir", "mkdir",
                 "makedirs", "truncate", "link", "symlink", "chmod"):
        setattr(os, name, path_guard(getattr(os, name)))

    # on 3.10 pathlib routes through an accessor whose attributes captured
    # the unguarded callables at class creation; later pythons look the os
    # functions up per call and need no repair
    accessor = getattr(pathlib, "_NormalAccessor", None)
    if accessor is not None:
        accessor.open = staticmethod(guarded_open)
        for name in ("unlink", "rename", "replace", "rmdir", "mkdir",
                     "link", "symlink", "chmod"):
            if hasattr(accessor, name) and hasattr(os, name):
                setattr(accessor, name, staticmethod(getattr(os, name)))


def canonical(value):
    # mirror of the grader's rules: bool before int, tuples count as lists
    if isinstance(value, bool):
        return "True" if value else "False"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return value
    if isinstance(value, (list, tuple)) and all(
            isinstance(x, str) for x in value):
        return json.dumps(list(value), ensure_ascii=False)
    raise TypeError("variable 'ans' has unsupported type "
                    + type(value).__name__)


def main():
    try:
        with open(PROG, encoding="utf-8") as fh:
            code = fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        send("error", detail="cannot read program: " + str(exc))
        return 1
    apply_limits()
    install_guards()
    namespace = {"__name__": "__main__"}
    try:
        exec(compile(code, "prog.py", "exec"), namespace)
    except Forbidden as exc:
        send("forbidden", detail=str(exc))
        return 3
    except BaseException:
        send("error", detail=traceback.format_exc())
        return 1
    if "ans" not in namespace:
        send("error", detail="the program never assigned the variable 'ans'")
        return 1
    try:
        answer = canonical(namespace["ans"])
    except TypeError as exc:
        send("error", detail=str(exc))
        return 1
    send("ok", answer=answer)
    return 0


sys.exit(main())
`;
