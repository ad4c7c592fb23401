//! Process-level jail applied between fork and exec.
//!
//! Filesystem writes are confined to the guest's scratch directory and TCP
//! bind/connect is denied with Landlock; a fresh network namespace removes
//! every interface except an unconfigured loopback. Resource caps use rlimits.
//! The ruleset is built in the parent so the child only issues raw syscalls.

use std::ffi::CString;
use std::io;
use std::os::fd::{AsRawFd, FromRawFd, OwnedFd};
use std::os::unix::ffi::OsStrExt;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IsolationConfig {
    /// Confine writes to the scratch directory and deny TCP via Landlock.
    pub landlock: bool,
    /// Run each guest in a private network namespace.
    pub net_namespace: bool,
}

impl Default for IsolationConfig {
    fn default() -> Self {
        IsolationConfig { landlock: true, net_namespace: true }
    }
}

const CREATE_RULESET_VERSION: u32 = 1;
const RULE_PATH_BENEATH: libc::c_int = 1;

const FS_WRITE_FILE: u64 = 1 << 1;
const FS_REMOVE_DIR: u64 = 1 << 4;
const FS_REMOVE_FILE: u64 = 1 << 5;
const FS_MAKE_CHAR: u64 = 1 << 6;
const FS_MAKE_DIR: u64 = 1 << 7;
const FS_MAKE_REG: u64 = 1 << 8;
const FS_MAKE_SOCK: u64 = 1 << 9;
const FS_MAKE_FIFO: u64 = 1 << 10;
const FS_MAKE_BLOCK: u64 = 1 << 11;
const FS_MAKE_SYM: u64 = 1 << 12;
const FS_REFER: u64 = 1 << 13;
const FS_TRUNCATE: u64 = 1 << 14;
const NET_BIND_TCP: u64 = 1 << 0;
const NET_CONNECT_TCP: u64 = 1 << 1;

#[repr(C)]
struct RulesetAttr {
    handled_access_fs: u64,
    handled_access_net: u64,
}

#[repr(C, packed)]
struct PathBeneathAttr {
    allowed_access: u64,
    parent_fd: i32,
}

/// Landlock ABI version supported by the running kernel, if any.
pub fn landlock_abi() -> Option<i64> {
    // SAFETY: the version query takes no pointers.
    let r = unsafe {
        libc::syscall(
            libc::SYS_landlock_create_ruleset,
            std::ptr::null::<RulesetAttr>(),
            0usize,
            CREATE_RULESET_VERSION,
        )
    };
    (r > 0).then_some(r)
}

/// A Landlock ruleset ready to be enforced in a forked child.
pub(crate) struct Ruleset {
    fd: OwnedFd,
}

impl Ruleset {
    pub(crate) fn confine_writes_to(dir: &Path) -> io::Result<Ruleset> {
        let abi = landlock_abi()
            .ok_or_else(|| io::Error::new(io::ErrorKind::Unsupported, "landlock is not available on this kernel"))?;
        let mut write_access = FS_WRITE_FILE
            | FS_REMOVE_DIR
            | FS_REMOVE_FILE
            | FS_MAKE_CHAR
            | FS_MAKE_DIR
            | FS_MAKE_REG
            | FS_MAKE_SOCK
            | FS_MAKE_FIFO
            | FS_MAKE_BLOCK
            | FS_MAKE_SYM;
        if abi >= 2 {
            write_access |= FS_REFER;
        }
        if abi >= 3 {
            write_access |= FS_TRUNCATE;
        }
        let attr = RulesetAttr {
            handled_access_fs: write_access,
            handled_access_net: if abi >= 4 { NET_BIND_TCP | NET_CONNECT_TCP } else { 0 },
        };
        let size = if abi >= 4 { std::mem::size_of::<RulesetAttr>() } else { std::mem::size_of::<u64>() };
        // SAFETY: attr outlives the call and `size` never exceeds its layout.
        let fd = unsafe { libc::syscall(libc::SYS_landlock_create_ruleset, &attr as *const RulesetAttr, size, 0u32) };
        if fd < 0 {
            return Err(io::Error::last_os_error());
        }
        // SAFETY: the kernel returned a fresh descriptor we now own.
        let fd = unsafe { OwnedFd::from_raw_fd(fd as i32) };

        let c_dir = CString::new(dir.as_os_str().as_bytes())
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "scratch path contains NUL"))?;
        // SAFETY: c_dir is a valid NUL-terminated path.
        let dir_fd = unsafe { libc::open(c_dir.as_ptr(), libc::O_PATH | libc::O_CLOEXEC | libc::O_DIRECTORY) };
        if dir_fd < 0 {
            return Err(io::Error::last_os_error());
        }
        // SAFETY: open returned a descriptor we own.
        let dir_fd = unsafe { OwnedFd::from_raw_fd(dir_fd) };
        let rule = PathBeneathAttr { allowed_access: write_access, parent_fd: dir_fd.as_raw_fd() };
        // SAFETY: both descriptors are live and `rule` matches the kernel layout.
        let r = unsafe {
            libc::syscall(
                libc::SYS_landlock_add_rule,
                fd.as_raw_fd(),
                RULE_PATH_BENEATH,
                &rule as *const PathBeneathAttr,
                0u32,
            )
        };
        if r < 0 {
            return Err(io::Error::last_os_error());
        }
        Ok(Ruleset { fd })
    }

    pub(crate) fn raw_fd(&self) -> i32 {
        self.fd.as_raw_fd()
    }
}

/// Everything the child needs, precomputed so `apply` stays async-signal-safe.
pub(crate) struct ChildJail {
    pub address_space_bytes: u64,
    pub cpu_seconds: u64,
    pub file_size_bytes: u64,
    pub net_namespace: bool,
    pub ruleset_fd: Option<i32>,
}

impl ChildJail {
    /// Runs in the forked child. Only raw syscalls; no allocation.
    pub(crate) fn apply(&self) -> io::Result<()> {
        // SAFETY: every call below is a plain syscall on the child's own state.
        unsafe {
            if libc::setpgid(0, 0) != 0 {
                return Err(io::Error::last_os_error());
            }
            set_limit(libc::RLIMIT_AS, self.address_space_bytes)?;
            set_limit(libc::RLIMIT_CPU, self.cpu_seconds)?;
            set_limit(libc::RLIMIT_FSIZE, self.file_size_bytes)?;
            set_limit(libc::RLIMIT_CORE, 0)?;
            if libc::prctl(libc::PR_SET_NO_NEW_PRIVS, 1, 0, 0, 0) != 0 {
                return Err(io::Error::last_os_error());
            }
            if self.net_namespace && libc::unshare(libc::CLONE_NEWNET) != 0 {
                return Err(io::Error::last_os_error());
            }
            if let Some(fd) = self.ruleset_fd {
                if libc::syscall(libc::SYS_landlock_restrict_self, fd, 0u32) != 0 {
                    return Err(io::Error::last_os_error());
                }
            }
        }
        Ok(())
    }
}

unsafe fn set_limit(resource: libc::__rlimit_resource_t, value: u64) -> io::Result<()> {
    let lim = libc::rlimit { rlim_cur: value, rlim_max: value };
    if libc::setrlimit(resource, &lim) != 0 {
        return Err(io::Error::last_os_error());
    }
    Ok(())
}
