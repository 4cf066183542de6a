//! Python bindings. Structured results cross the boundary as plain Python objects
//! (decoded from the crate's JSON forms); images and masks stay as wrapped handles.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;
use serde::de::DeserializeOwned;
use serde::Serialize;

use arthronav::geometry::{
    distort_point, exp_so3, undistort_point, CameraFile, CameraModel, DistortionCoefficients, Pose, Vec2, Vec3,
};
use arthronav::grid::{self as bhgrid, BHGrid};
use arthronav::harness::{self, InitMask, SequenceDir, SequenceGenerator, SequenceScript, TrackOptions};
use arthronav::image as img;
use arthronav::memory::{self, MemoryConfig, SurgicalPhase, Variant};
use arthronav::raster::LabeledMesh;
use arthronav::registration::{register_frame as core_register, Curve2D, FrameRegistrationConfig, ViewpointPrior};
use arthronav::segmentation::{self as seg, HsvThresholds, RegionGrowingOracle};
use arthronav::{AnatomicalRegion, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::NumericalFailure { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for arthronav::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// Serializes through `json.loads` so callers get dicts and lists.
fn to_py<T: Serialize>(py: Python<'_>, v: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    json_loads(py, &text)
}

fn json_loads(py: Python<'_>, text: &str) -> PyResult<Py<PyAny>> {
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Accepts either a JSON string or any `json.dumps`-able object.
fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = match obj.extract::<String>() {
        Ok(s) => s,
        Err(_) => obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?,
    };
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(format!("malformed input: {e}")))
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().py()
}

fn viewpoint(v: (f64, f64, f64)) -> PyResult<memory::Viewpoint> {
    memory::Viewpoint::new(v.0, v.1, v.2).py()
}

/// RGB8 image.
#[pyclass(name = "Image", module = "arthronav", skip_from_py_object)]
#[derive(Clone)]
struct PyImage(img::Image);

#[pymethods]
impl PyImage {
    #[new]
    fn new(width: usize, height: usize, data: &[u8]) -> PyResult<Self> {
        Ok(PyImage(img::Image::from_raw_rgb(width, height, data).py()?))
    }

    #[staticmethod]
    fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        PyImage(img::Image::filled(width, height, rgb))
    }

    #[staticmethod]
    fn read_ppm(path: PathBuf) -> PyResult<Self> {
        Ok(PyImage(img::Image::read_ppm(&path).py()?))
    }

    fn write_ppm(&self, path: PathBuf) -> PyResult<()> {
        self.0.write_ppm(&path).py()
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    fn get(&self, x: usize, y: usize) -> PyResult<[u8; 3]> {
        if x >= self.0.width() || y >= self.0.height() {
            return Err(PyValueError::new_err("pixel out of range"));
        }
        Ok(self.0.get(x, y))
    }

    /// Row-major interleaved RGB bytes.
    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.0.to_raw_rgb())
    }

    fn __repr__(&self) -> String {
        format!("Image({}x{})", self.0.width(), self.0.height())
    }
}

/// Binary mask.
#[pyclass(name = "Mask", module = "arthronav", eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct PyMask(img::Mask);

#[pymethods]
impl PyMask {
    #[new]
    fn new(width: usize, height: usize, bits: Vec<bool>) -> PyResult<Self> {
        Ok(PyMask(img::Mask::from_bits(width, height, bits).py()?))
    }

    #[staticmethod]
    fn read_pgm(path: PathBuf) -> PyResult<Self> {
        Ok(PyMask(img::Mask::read_pgm(&path).py()?))
    }

    fn write_pgm(&self, path: PathBuf) -> PyResult<()> {
        self.0.write_pgm(&path).py()
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    fn area(&self) -> usize {
        self.0.area()
    }

    fn bits(&self) -> Vec<bool> {
        self.0.bits().to_vec()
    }

    /// `(x0, y0, x1, y1)` inclusive, or None when empty.
    fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        self.0.bounding_box()
    }

    fn iou(&self, other: &PyMask) -> PyResult<f64> {
        seg::iou(&self.0, &other.0).py()
    }

    fn centroid(&self) -> PyResult<(f64, f64)> {
        seg::centroid(&self.0).py()
    }

    fn largest_component(&self) -> PyMask {
        PyMask(seg::largest_component(&self.0))
    }

    fn __repr__(&self) -> String {
        format!("Mask({}x{}, area={})", self.0.width(), self.0.height(), self.0.area())
    }
}

/// Scope camera: intrinsics, distortion, frustum, angular offset and pose.
#[pyclass(name = "Camera", module = "arthronav", skip_from_py_object)]
#[derive(Clone)]
struct PyCamera(CameraModel);

#[pymethods]
impl PyCamera {
    /// From the camera file layout (`fx`, `fy`, `cx`, `cy`, `dist`, `R`, `t`, ...).
    #[staticmethod]
    fn from_json(obj: &Bound<'_, PyAny>) -> PyResult<Self> {
        let f: CameraFile = from_py(obj)?;
        Ok(PyCamera(CameraModel::try_from(&f).py()?))
    }

    #[staticmethod]
    fn read_json(path: PathBuf) -> PyResult<Self> {
        let text = std::fs::read_to_string(&path).map_err(|e| py_err(Error::io(&path, e)))?;
        let f: CameraFile = serde_json::from_str(&text).map_err(|e| py_err(Error::parse(&path, e.to_string())))?;
        Ok(PyCamera(CameraModel::try_from(&f).py()?))
    }

    /// The synthetic-scene camera looking from `eye` at `target`, rolled about its axis.
    #[staticmethod]
    #[pyo3(signature = (width, height, eye, target, roll_deg = 0.0))]
    fn look_at(width: usize, height: usize, eye: [f64; 3], target: [f64; 3], roll_deg: f64) -> PyResult<Self> {
        let base = Pose::look_at(&Vec3::from(eye), &Vec3::from(target), &harness::world_up()).py()?;
        let pose = Pose::new(
            exp_so3(&Vec3::new(0.0, 0.0, roll_deg.to_radians())) * base.rotation,
            base.translation,
        )
        .py()?;
        Ok(PyCamera(harness::default_camera((width, height), pose)))
    }

    fn to_json(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &CameraFile::from(&self.0))
    }

    /// Pinhole projection of a world point (no lens distortion).
    fn project(&self, point: [f64; 3]) -> PyResult<(f64, f64)> {
        let p = self.0.project_world(&Vec3::from(point)).py()?;
        Ok((p.x, p.y))
    }

    fn __repr__(&self) -> String {
        let k = &self.0.intrinsics;
        format!("Camera(fx={}, fy={}, cx={}, cy={})", k.fx, k.fy, k.cx, k.cy)
    }
}

/// Bernard–Hertel style m×n grid on the lateral radiograph plane.
#[pyclass(name = "Grid", module = "arthronav", skip_from_py_object)]
#[derive(Clone)]
struct PyGrid(BHGrid);

#[pymethods]
impl PyGrid {
    #[staticmethod]
    fn from_json(obj: &Bound<'_, PyAny>) -> PyResult<Self> {
        Ok(PyGrid(BHGrid::from_spec(&from_py(obj)?).py()?))
    }

    #[staticmethod]
    fn read_json(path: PathBuf) -> PyResult<Self> {
        Ok(PyGrid(BHGrid::read_json(&path).py()?))
    }

    fn to_json(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.0.to_spec())
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    /// Pixel positions in the scope view, row-major; with `landmarks`
    /// (`[{"p_s": [x,y,z], "p_a": [u,v]}, ...]`) the scope pose is refined first.
    #[pyo3(signature = (camera, landmarks = None))]
    fn project(&self, camera: &PyCamera, landmarks: Option<&Bound<'_, PyAny>>) -> PyResult<Vec<(f64, f64)>> {
        let mut cam = camera.0;
        if let Some(lm) = landmarks {
            let lm: Vec<bhgrid::LandmarkPair> = from_py(lm)?;
            let r = bhgrid::refine_projection(&self.0, &cam, &lm, &Default::default()).py()?;
            cam = bhgrid::adjusted_camera(&cam, &r.delta_r.into(), &r.delta_t.into());
        }
        let px = bhgrid::project_grid(&self.0, &cam).py()?;
        Ok(px.iter().map(|p| (p.x, p.y)).collect())
    }

    /// Draws the projected grid onto a copy of `frame`.
    #[pyo3(signature = (frame, camera, color = [0, 255, 0]))]
    fn overlay(&self, frame: &PyImage, camera: &PyCamera, color: [u8; 3]) -> PyResult<PyImage> {
        let px = bhgrid::project_grid(&self.0, &camera.0).py()?;
        Ok(PyImage(bhgrid::draw_overlay(&frame.0, &px, color)))
    }
}

/// Hierarchical-memory tracking session.
#[pyclass(name = "TrackingSession", module = "arthronav")]
struct PyTrackingSession(memory::TrackingSession);

#[pymethods]
impl PyTrackingSession {
    /// `config` is a memory configuration (dict or JSON); `variant`/`seed` override it.
    #[new]
    #[pyo3(signature = (config = None, variant = None, seed = None))]
    fn new(config: Option<&Bound<'_, PyAny>>, variant: Option<&str>, seed: Option<u64>) -> PyResult<Self> {
        let mut cfg: MemoryConfig = match config {
            Some(c) => from_py(c)?,
            None => MemoryConfig::default(),
        };
        if let Some(v) = variant {
            cfg.variant = parse::<Variant>(v)?;
        }
        if let Some(s) = seed {
            cfg.seed = s;
        }
        Ok(PyTrackingSession(memory::TrackingSession::new(cfg).py()?))
    }

    /// Seeds the session; returns `(mask, diagnostics)`.
    #[pyo3(signature = (image, mask, t = 0, phase = "exploration", viewpoint = (0.0, 0.0, 3.0), region = None))]
    #[allow(clippy::too_many_arguments)]
    fn initialize(
        &mut self,
        py: Python<'_>,
        image: &PyImage,
        mask: &PyMask,
        t: usize,
        phase: &str,
        viewpoint: (f64, f64, f64),
        region: Option<&str>,
    ) -> PyResult<(PyMask, Py<PyAny>)> {
        let region = region.map(parse::<AnatomicalRegion>).transpose()?;
        let out = self
            .0
            .initialize(
                &image.0,
                &mask.0,
                self::viewpoint(viewpoint)?,
                t,
                parse::<SurgicalPhase>(phase)?,
                region,
            )
            .py()?;
        Ok((PyMask(out.mask), to_py(py, &out.diagnostics)?))
    }

    /// Tracks one frame; returns `(mask, diagnostics)`.
    #[pyo3(signature = (image, t, phase = "exploration", viewpoint = (0.0, 0.0, 3.0), region = None))]
    fn track_frame(
        &mut self,
        py: Python<'_>,
        image: &PyImage,
        t: usize,
        phase: &str,
        viewpoint: (f64, f64, f64),
        region: Option<&str>,
    ) -> PyResult<(PyMask, Py<PyAny>)> {
        let region = region.map(parse::<AnatomicalRegion>).transpose()?;
        let out = self
            .0
            .track_frame(
                &image.0,
                t,
                parse::<SurgicalPhase>(phase)?,
                self::viewpoint(viewpoint)?,
                region,
            )
            .py()?;
        Ok((PyMask(out.mask), to_py(py, &out.diagnostics)?))
    }

    #[getter]
    fn initialized(&self) -> bool {
        self.0.is_initialized()
    }

    #[getter]
    fn working_len(&self) -> usize {
        self.0.store().working.len()
    }

    #[getter]
    fn longterm_len(&self) -> usize {
        self.0.store().longterm.len()
    }

    fn snapshot(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        json_loads(py, &self.0.snapshot_json().py()?)
    }
}

fn thresholds(obj: Option<&Bound<'_, PyAny>>) -> PyResult<HsvThresholds> {
    obj.map(from_py).transpose().map(Option::unwrap_or_default)
}

/// First-frame cartilage mask: HSV threshold, largest component, region-growing candidates.
#[pyfunction]
#[pyo3(signature = (image, thresholds = None))]
fn segment(image: &PyImage, thresholds: Option<&Bound<'_, PyAny>>) -> PyResult<PyMask> {
    let th = self::thresholds(thresholds)?;
    Ok(PyMask(
        seg::segment_first_frame(&image.0, &th, &RegionGrowingOracle::default())
            .py()?
            .mask,
    ))
}

#[pyfunction]
fn iou(a: &PyMask, b: &PyMask) -> PyResult<f64> {
    seg::iou(&a.0, &b.0).py()
}

/// Applies Brown–Conrady distortion `[k1, k2, p1, p2, k3]` to a normalized point.
#[pyfunction]
fn distort(point: (f64, f64), coeffs: [f64; 5]) -> PyResult<(f64, f64)> {
    let p = distort_point(
        &Vec2::new(point.0, point.1),
        &DistortionCoefficients::from_array(coeffs),
    )
    .py()?;
    Ok((p.x, p.y))
}

#[pyfunction]
fn undistort(point: (f64, f64), coeffs: [f64; 5]) -> PyResult<(f64, f64)> {
    let p = undistort_point(
        &Vec2::new(point.0, point.1),
        &DistortionCoefficients::from_array(coeffs),
    )
    .py()?;
    Ok((p.x, p.y))
}

/// The benchmark orbit script as a dict.
#[pyfunction]
#[pyo3(signature = (seed = 11, frames = harness::STANDARD_FRAMES, degraded = false))]
fn standard_script(py: Python<'_>, seed: u64, frames: usize, degraded: bool) -> PyResult<Py<PyAny>> {
    to_py(py, &harness::standard_script(seed, frames, degraded))
}

/// Renders a script to `outdir`; returns the manifest.
#[pyfunction]
fn generate_sequence(py: Python<'_>, script: &Bound<'_, PyAny>, outdir: PathBuf) -> PyResult<Py<PyAny>> {
    let s: SequenceScript = from_py(script)?;
    to_py(py, &harness::generate_sequence(&s, &outdir).py()?)
}

fn track_options(config: Option<&Bound<'_, PyAny>>, variant: Option<&str>, truth_init: bool) -> PyResult<TrackOptions> {
    let mut opts = TrackOptions {
        keep_masks: true,
        init: if truth_init {
            InitMask::Truth
        } else {
            InitMask::Segment(HsvThresholds::default())
        },
        ..TrackOptions::default()
    };
    if let Some(c) = config {
        opts.config = from_py(c)?;
    }
    if let Some(v) = variant {
        opts.config.variant = parse(v)?;
    }
    Ok(opts)
}

/// Tracks a generated sequence directory. Returns `{"summary", "report"}`; with
/// `outdir` the predicted masks and `track.json` are written there too.
#[pyfunction]
#[pyo3(signature = (seqdir, outdir = None, config = None, variant = None, truth_init = false))]
fn track_directory(
    py: Python<'_>,
    seqdir: PathBuf,
    outdir: Option<PathBuf>,
    config: Option<&Bound<'_, PyAny>>,
    variant: Option<&str>,
    truth_init: bool,
) -> PyResult<Py<PyAny>> {
    let opts = track_options(config, variant, truth_init)?;
    let dir = SequenceDir::open(&seqdir).py()?;
    let run = harness::track_source(&dir, &opts).py()?;
    let summary = run.summary();
    if let Some(out) = outdir {
        harness::write_masks(&out, &run.masks).py()?;
        let text = serde_json::to_string_pretty(&summary).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let p = out.join("track.json");
        std::fs::write(&p, text).map_err(|e| py_err(Error::io(&p, e)))?;
    }
    to_py(py, &serde_json::json!({ "summary": summary, "report": run.report }))
}

/// Scores predicted masks against truth masks (both `masks/%06d.pgm` layouts).
#[pyfunction]
fn evaluate_dirs(py: Python<'_>, preddir: PathBuf, truthdir: PathBuf) -> PyResult<Py<PyAny>> {
    let pred = harness::read_masks(&preddir).py()?;
    let truth = harness::read_masks(&truthdir).py()?;
    to_py(py, &harness::evaluate(&pred, &truth).py()?)
}

/// Runs the memory variants on a script, rendering frames in memory.
#[pyfunction]
#[pyo3(signature = (script, variants = vec!["full".to_string(), "no_longterm".to_string(), "single_level".to_string()], config = None))]
fn run_ablation(
    py: Python<'_>,
    script: &Bound<'_, PyAny>,
    variants: Vec<String>,
    config: Option<&Bound<'_, PyAny>>,
) -> PyResult<Py<PyAny>> {
    let s: SequenceScript = from_py(script)?;
    let vs = variants
        .iter()
        .map(|v| parse::<Variant>(v))
        .collect::<PyResult<Vec<_>>>()?;
    let opts = track_options(config, None, false)?;
    let gen = SequenceGenerator::new(s).py()?;
    to_py(py, &harness::run_ablation(&gen, &vs, &opts).py()?)
}

/// Registers a labelled mesh to one frame. `prior` is `{"approach": box, "target": box}`;
/// `margin` an optional observed cartilage margin `{"points": [...], "closed": bool}`.
#[pyfunction]
#[pyo3(signature = (image, mesh, labels, prior, camera = None, margin = None, grid = 3))]
#[allow(clippy::too_many_arguments)]
fn register_frame(
    py: Python<'_>,
    image: &PyImage,
    mesh: PathBuf,
    labels: PathBuf,
    prior: &Bound<'_, PyAny>,
    camera: Option<&PyCamera>,
    margin: Option<&Bound<'_, PyAny>>,
    grid: usize,
) -> PyResult<Py<PyAny>> {
    let (m, _) = LabeledMesh::load(&mesh, &labels).py()?;
    let prior: ViewpointPrior = from_py(prior)?;
    let margin: Option<Curve2D> = margin.map(from_py).transpose()?;
    let cam = match camera {
        Some(c) => c.0,
        None => harness::default_camera((image.0.width(), image.0.height()), Pose::identity()),
    };
    let cfg = FrameRegistrationConfig {
        grid_n: grid,
        ..FrameRegistrationConfig::default()
    };
    to_py(
        py,
        &core_register(&image.0, &m, &cam, &prior, margin, &cfg).py()?.report(),
    )
}

#[pymodule(name = "arthronav")]
fn arthronav_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyImage>()?;
    m.add_class::<PyMask>()?;
    m.add_class::<PyCamera>()?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PyTrackingSession>()?;
    m.add_function(wrap_pyfunction!(segment, m)?)?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(distort, m)?)?;
    m.add_function(wrap_pyfunction!(undistort, m)?)?;
    m.add_function(wrap_pyfunction!(standard_script, m)?)?;
    m.add_function(wrap_pyfunction!(generate_sequence, m)?)?;
    m.add_function(wrap_pyfunction!(track_directory, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_dirs, m)?)?;
    m.add_function(wrap_pyfunction!(run_ablation, m)?)?;
    m.add_function(wrap_pyfunction!(register_frame, m)?)?;
    m.add("FAILURE_IOU", harness::FAILURE_IOU)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
