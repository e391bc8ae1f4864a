//! C interface. Kernels are opaque handles created by the `ok_*_new`
//! functions and released with [`ok_kernel_free`]. Every fallible call
//! returns an [`OkStatus`]; on failure the message is kept per thread and
//! read with [`ok_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use orthokit::conv::apply;
use orthokit::ortho::orthogonalize;
use orthokit::orthoconv::{aoc_kernel, soc_explicit_kernel, AocParams, SocParams};
use orthokit::verify::{
    existence_check, fft_circular_spectrum, gram_bound, operator_power_iteration,
    toeplitz_svd_spectrum, Existence,
};
use orthokit::{
    ConvLayerConfig, ConvSpec, Error, FreeParams, Matrix, OrthoMethod, OrthoParams, PaddingMode,
    Tensor4,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParam = 2,
    Shape = 3,
    Rejected = 4,
    NotConverged = 5,
    Numeric = 6,
    BufferTooSmall = 7,
    Io = 8,
    Panic = 9,
}

/// Values of [`OkLayerConfig::padding`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OkPadding {
    Zero = 0,
    Circular = 1,
}

/// Values of the `method` argument of [`ok_orthogonalize`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OkOrthoMethod {
    Bjorck = 0,
    Cayley = 1,
    Exp = 2,
    Cholesky = 3,
    Qr = 4,
}

/// Values of the `method` argument of [`ok_kernel_spectrum`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OkSpectrumMethod {
    ToeplitzSvd = 0,
    FftCircular = 1,
    GramBound = 2,
    PowerIter = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct OkLayerConfig {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub dilation: usize,
    pub groups: usize,
    /// An [`OkPadding`] value.
    pub padding: u32,
    pub transposed: bool,
}

/// Convolution kernel together with the layer geometry it is applied with.
pub struct OkKernel {
    kernel: Tensor4,
    spec: ConvSpec,
    c_in: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(OkStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Shape(_) => OkStatus::Shape,
            Error::InvalidParam(_) | Error::CircularTransposed | Error::ZeroMatrix => {
                OkStatus::InvalidParam
            }
            Error::Rejected(_) => OkStatus::Rejected,
            Error::NotConverged { .. } => OkStatus::NotConverged,
            Error::Singular(_) | Error::Cholesky { .. } | Error::NonFinite(_) => OkStatus::Numeric,
            Error::Format(_) | Error::Io(_) => OkStatus::Io,
        };
        Fail(code, e.to_string())
    }
}

fn fail<T>(code: OkStatus, msg: impl Into<String>) -> Result<T, Fail> {
    Err(Fail(code, msg.into()))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> OkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OkStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            OkStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        fail(OkStatus::NullPointer, format!("{what} is null"))
    } else {
        Ok(())
    }
}

fn layer_config(cfg: &OkLayerConfig) -> Result<ConvLayerConfig, Fail> {
    let mode = match cfg.padding {
        0 => PaddingMode::Zero,
        1 => PaddingMode::Circular,
        p => return fail(OkStatus::InvalidParam, format!("unknown padding mode {p}")),
    };
    let c = ConvLayerConfig::new(cfg.c_in, cfg.c_out, cfg.kernel_size)
        .with_stride(cfg.stride)
        .with_dilation(cfg.dilation)
        .with_groups(cfg.groups)
        .with_mode(mode)
        .with_transposed(cfg.transposed);
    c.validate()?;
    Ok(c)
}

fn accepted(cfg: &ConvLayerConfig) -> Result<(), Fail> {
    match existence_check(cfg) {
        Existence::Accept => Ok(()),
        Existence::Reject(r) => fail(OkStatus::Rejected, format!("{:?}: {}", r.code, r.reason)),
    }
}

fn into_handle(kernel: Tensor4, cfg: &ConvLayerConfig, out: *mut *mut OkKernel) {
    let spec = cfg.conv_spec(kernel.kh(), kernel.kw());
    let h = Box::new(OkKernel {
        kernel,
        spec,
        c_in: cfg.c_in,
    });
    unsafe { *out = Box::into_raw(h) };
}

/// Length in bytes of the last error message of this thread, including the
/// terminating NUL; 0 when there is none.
#[no_mangle]
pub extern "C" fn ok_last_error_length() -> usize {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map_or(0, |c| c.as_bytes_with_nul().len())
    })
}

/// Copy the last error message into `buf`, truncated to `len - 1` bytes and
/// NUL terminated. Returns the number of bytes written without the NUL.
///
/// # Safety
/// `buf` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ok_last_error_message(buf: *mut c_char, len: usize) -> usize {
    if buf.is_null() || len == 0 {
        return 0;
    }
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_ref().map_or(&[][..], |c| c.as_bytes());
        let n = bytes.len().min(len - 1);
        ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
        *buf.add(n) = 0;
        n
    })
}

/// `OK_STATUS_OK` when an exactly orthogonal layer with `cfg` exists,
/// `OK_STATUS_REJECTED` with the reason as the error message otherwise.
///
/// # Safety
/// `cfg` must point to a valid config.
#[no_mangle]
pub unsafe extern "C" fn ok_check_config(cfg: *const OkLayerConfig) -> OkStatus {
    guard(|| {
        non_null(cfg, "cfg")?;
        accepted(&layer_config(&*cfg)?)
    })
}

/// Random orthogonal AOC kernel for `cfg`, drawn from `seed`.
///
/// # Safety
/// `cfg` must point to a valid config and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn ok_aoc_new(
    cfg: *const OkLayerConfig,
    seed: u64,
    out: *mut *mut OkKernel,
) -> OkStatus {
    guard(|| {
        non_null(cfg, "cfg")?;
        non_null(out, "out")?;
        let c = layer_config(&*cfg)?;
        accepted(&c)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = aoc_kernel(&AocParams::random(&c, &mut rng)?, &c)?;
        into_handle(k, &c, out);
        Ok(())
    })
}

/// Random SOC kernel for `cfg`, drawn from `seed`.
///
/// # Safety
/// `cfg` must point to a valid config and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn ok_soc_new(
    cfg: *const OkLayerConfig,
    seed: u64,
    out: *mut *mut OkKernel,
) -> OkStatus {
    guard(|| {
        non_null(cfg, "cfg")?;
        non_null(out, "out")?;
        let c = layer_config(&*cfg)?;
        accepted(&c)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = soc_explicit_kernel(&SocParams::random(&c, &mut rng)?, &c)?;
        into_handle(k, &c, out);
        Ok(())
    })
}

/// Wrap caller data of shape `(c_out, c_in / groups, kh, kw)`, row-major,
/// applied with the geometry of `cfg`. `cfg.kernel_size` is ignored.
///
/// # Safety
/// `data` must hold the product of `shape` values, `shape` four values.
#[no_mangle]
pub unsafe extern "C" fn ok_kernel_from_data(
    data: *const f64,
    shape: *const usize,
    cfg: *const OkLayerConfig,
    out: *mut *mut OkKernel,
) -> OkStatus {
    guard(|| {
        non_null(data, "data")?;
        non_null(shape, "shape")?;
        non_null(cfg, "cfg")?;
        non_null(out, "out")?;
        let s = [*shape, *shape.add(1), *shape.add(2), *shape.add(3)];
        let mut c = *cfg;
        c.kernel_size = s[2].max(1);
        let c = layer_config(&c)?;
        let n: usize = s.iter().product();
        let k = Tensor4::from_vec(s, std::slice::from_raw_parts(data, n).to_vec())?;
        into_handle(k, &c, out);
        Ok(())
    })
}

/// Release a handle; null is ignored.
///
/// # Safety
/// `k` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ok_kernel_free(k: *mut OkKernel) {
    if !k.is_null() {
        drop(Box::from_raw(k));
    }
}

/// Kernel shape `(c_out, c_in / groups, kh, kw)`.
///
/// # Safety
/// `k` must be a live handle and `shape` must hold four values.
#[no_mangle]
pub unsafe extern "C" fn ok_kernel_shape(k: *const OkKernel, shape: *mut usize) -> OkStatus {
    guard(|| {
        non_null(k, "kernel")?;
        non_null(shape, "shape")?;
        for (i, v) in (*k).kernel.shape().iter().enumerate() {
            *shape.add(i) = *v;
        }
        Ok(())
    })
}

/// Copy the kernel entries, row-major, into `buf`.
///
/// # Safety
/// `k` must be a live handle and `buf` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn ok_kernel_data(k: *const OkKernel, buf: *mut f64, len: usize) -> OkStatus {
    guard(|| {
        non_null(k, "kernel")?;
        non_null(buf, "buf")?;
        let d = (*k).kernel.data();
        if len < d.len() {
            return fail(
                OkStatus::BufferTooSmall,
                format!("buffer holds {len} values, kernel has {}", d.len()),
            );
        }
        ptr::copy_nonoverlapping(d.as_ptr(), buf, d.len());
        Ok(())
    })
}

/// Output shape `(c, h, w)` of the layer on an `h × w` input.
///
/// # Safety
/// `k` must be a live handle and `out_shape` must hold three values.
#[no_mangle]
pub unsafe extern "C" fn ok_kernel_output_shape(
    k: *const OkKernel,
    h: usize,
    w: usize,
    out_shape: *mut usize,
) -> OkStatus {
    guard(|| {
        non_null(k, "kernel")?;
        non_null(out_shape, "out_shape")?;
        let k = &*k;
        let s = k.spec.output_shape(&k.kernel, [k.c_in, h, w])?;
        for (i, v) in s.iter().enumerate() {
            *out_shape.add(i) = *v;
        }
        Ok(())
    })
}

/// Apply the layer to one `(c_in, h, w)` input, row-major. `y_len` must be
/// at least the product of [`ok_kernel_output_shape`].
///
/// # Safety
/// `x` must hold `c_in · h · w` values and `y` must hold `y_len` values.
#[no_mangle]
pub unsafe extern "C" fn ok_kernel_apply(
    k: *const OkKernel,
    x: *const f64,
    h: usize,
    w: usize,
    y: *mut f64,
    y_len: usize,
) -> OkStatus {
    guard(|| {
        non_null(k, "kernel")?;
        non_null(x, "x")?;
        non_null(y, "y")?;
        let k = &*k;
        let shape = [k.c_in, h, w];
        let n: usize = shape.iter().product();
        let xin = orthokit::FeatureMap::from_vec(shape, std::slice::from_raw_parts(x, n).to_vec())?;
        let out = apply(&xin, &k.kernel, &k.spec)?;
        let d = out.data();
        if y_len < d.len() {
            return fail(
                OkStatus::BufferTooSmall,
                format!("output buffer holds {y_len} values, need {}", d.len()),
            );
        }
        ptr::copy_nonoverlapping(d.as_ptr(), y, d.len());
        Ok(())
    })
}

/// Extreme singular values of the layer on `h × w` inputs. `iters` is used
/// by the Gram and power methods. Methods that only bound the top of the
/// spectrum report `sigma_min = 0`.
///
/// # Safety
/// `k` must be a live handle; `sigma_max` and `sigma_min` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ok_kernel_spectrum(
    k: *const OkKernel,
    h: usize,
    w: usize,
    method: u32,
    iters: usize,
    sigma_max: *mut f64,
    sigma_min: *mut f64,
) -> OkStatus {
    guard(|| {
        non_null(k, "kernel")?;
        non_null(sigma_max, "sigma_max")?;
        non_null(sigma_min, "sigma_min")?;
        let k = &*k;
        let shape = [k.c_in, h, w];
        let r = match method {
            0 => toeplitz_svd_spectrum(&k.kernel, &k.spec, shape)?,
            1 => fft_circular_spectrum(&k.kernel, &k.spec, (h, w))?,
            2 => gram_bound(&k.kernel, &k.spec, iters)?,
            3 => operator_power_iteration(&k.kernel, &k.spec, shape, iters)?,
            m => {
                return fail(
                    OkStatus::InvalidParam,
                    format!("unknown spectrum method {m}"),
                )
            }
        };
        *sigma_max = r.sigma_max;
        *sigma_min = r.sigma_min;
        Ok(())
    })
}

/// Orthogonalize a row-major `rows × cols` matrix with default parameters
/// of `method` and write the result, row-major, to `out`.
///
/// # Safety
/// `w` and `out` must each hold `rows · cols` values.
#[no_mangle]
pub unsafe extern "C" fn ok_orthogonalize(
    w: *const f64,
    rows: usize,
    cols: usize,
    method: u32,
    out: *mut f64,
) -> OkStatus {
    guard(|| {
        non_null(w, "w")?;
        non_null(out, "out")?;
        let m = match method {
            0 => OrthoMethod::Bjorck,
            1 => OrthoMethod::Cayley,
            2 => OrthoMethod::Exp,
            3 => OrthoMethod::Cholesky,
            4 => OrthoMethod::Qr,
            m => {
                return fail(
                    OkStatus::InvalidParam,
                    format!("unknown orthogonalization method {m}"),
                )
            }
        };
        if rows == 0 || cols == 0 {
            return fail(OkStatus::Shape, "empty matrix");
        }
        let a = Matrix::from_row_slice(rows, cols, std::slice::from_raw_parts(w, rows * cols));
        let q = orthogonalize(&a, &OrthoParams::with_method(m))?;
        for i in 0..rows {
            for j in 0..cols {
                *out.add(i * cols + j) = q[(i, j)];
            }
        }
        Ok(())
    })
}
