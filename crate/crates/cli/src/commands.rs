use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use visfield::dirsphere::{interpolation_accuracy, DirectionSet};
use visfield::field::{
    load_model, prepare_points, save_model, sigmoid, train, Architecture, FieldModel, TrainConfig, TrainingSet,
    GRID_HALF_EXTENT,
};
use visfield::geom::io::{load_mesh, save_mesh_with_comments};
use visfield::geom::{Aabb, Bvh, Camera, TriangleMesh, Vec3};
use visfield::image::{load_image, save_image, tone_map, Image};
use visfield::oracle::{bake_dataset, load_baked, BakedDataset, save_baked, trace_visibility, BakeConfig, SURFACE_OFFSET};
use visfield::prt::{load_light, render_image, transfer_vector, PrtMesh, RenderMode};
use visfield::recon::{evaluate_geometry, marching_cubes, psnr, sample_grid, ssim, MetricReport};
use visfield::viewagg::{default_rig, load_view_set, render_view_set, save_view_set, ViewSet};
use visfield::geom::PointKind;

use crate::config::{PipelineConfig, Provenance, RigConfig};
use crate::{
    BakeArgs, Cli, Command, EvalCommand, EvalGeometryArgs, EvalImageArgs, ImageFormat, InterpArgs, ReconstructArgs,
    RelightArgs, TrainArgs, ViewArgs,
};

/// Map from normalized coordinates back to the mesh's own: `x / scale + center`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct Frame {
    center: [f64; 3],
    scale: f64,
}

impl Frame {
    const IDENTITY: Frame = Frame {
        center: [0.0; 3],
        scale: 1.0,
    };

    fn to_original(&self, p: Vec3) -> Vec3 {
        p * (1.0 / self.scale) + Vec3::from_array(self.center)
    }
}

/// What a model file records beyond its parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct ModelMeta {
    #[serde(flatten)]
    provenance: Provenance,
    frame: Frame,
    interp_k: usize,
    rig: RigConfig,
    /// Box covered by the training samples, in the normalized frame. Occupancy outside it
    /// was never supervised, so reconstruction stays inside.
    #[serde(default)]
    domain: Option<[[f64; 3]; 2]>,
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = PipelineConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let has_config = cli.config.is_some();
    match cli.command {
        Command::Bake(a) => bake(cfg, a),
        Command::Train(a) => train_cmd(cfg, a, has_config),
        Command::Reconstruct(a) => reconstruct(cfg, a),
        Command::Relight(a) => relight(cfg, a),
        Command::Eval(EvalCommand::Geometry(a)) => eval_geometry(cfg, a),
        Command::Eval(EvalCommand::Image(a)) => eval_image(cfg, a),
        Command::InterpAcc(a) => interp_acc(cfg, a),
    }
}

/// Loads a mesh and moves it to the unit frame every command works in.
fn load_normalized(path: &Path) -> Result<(TriangleMesh, Frame)> {
    let mesh = load_mesh(path).with_context(|| format!("loading mesh {}", path.display()))?;
    let (mesh, center, scale) = mesh.normalized();
    Ok((
        mesh,
        Frame {
            center: center.to_array(),
            scale,
        },
    ))
}

fn require_mesh(flag: Option<PathBuf>, cfg: &PipelineConfig, command: &str) -> Result<PathBuf> {
    match flag.or_else(|| cfg.mesh.clone()) {
        Some(p) => Ok(p),
        None => bail!(visfield::Error::InvalidInput(format!("{command} needs --mesh (or \"mesh\" in the config)"))),
    }
}

fn out_path(flag: Option<PathBuf>, cfg: &PipelineConfig, default_name: &str) -> PathBuf {
    flag.unwrap_or_else(|| cfg.output_dir.join(default_name))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes") + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn bake(mut cfg: PipelineConfig, a: BakeArgs) -> Result<()> {
    if let Some(n) = a.directions {
        cfg.directions = n;
    }
    let s = &mut cfg.bake;
    s.sampling.near_count = a.near.unwrap_or(s.sampling.near_count);
    s.sampling.uniform_count = a.uniform.unwrap_or(s.sampling.uniform_count);
    s.sampling.sigma = a.sigma.unwrap_or(s.sampling.sigma);
    s.surface_count = a.surface.unwrap_or(s.surface_count);
    let mesh_path = require_mesh(a.mesh, &cfg, "bake")?;
    cfg.validate()?;
    if !mesh_path.exists() {
        bail!(visfield::Error::InvalidInput(format!("mesh {} does not exist", mesh_path.display())));
    }
    let out = out_path(a.out, &cfg, "bake.vfld");

    #[derive(Serialize)]
    struct Effective {
        directions: usize,
        bake: BakeConfig,
        seed: u64,
    }
    let prov = Provenance::new(
        "bake",
        &Effective {
            directions: cfg.directions,
            bake: cfg.bake,
            seed: cfg.seed,
        },
    );
    let (mesh, frame) = load_normalized(&mesh_path)?;
    let dirs = DirectionSet::fibonacci(cfg.directions)?;
    let t = Instant::now();
    let ds = bake_dataset(&mesh, &dirs, &cfg.bake, cfg.seed)?;
    let elapsed = t.elapsed().as_secs_f64();
    save_baked(&ds, &out)?;

    #[derive(Serialize)]
    struct Manifest<'a> {
        #[serde(flatten)]
        provenance: &'a Provenance,
        directions: usize,
        samples: usize,
        surface: usize,
        near: usize,
        uniform: usize,
        mesh_hash: String,
        frame: Frame,
    }
    let counts = [PointKind::Surface, PointKind::Near, PointKind::Uniform].map(|k| ds.count(k));
    write_json(
        &sidecar(&out),
        &Manifest {
            provenance: &prov,
            directions: ds.n,
            samples: ds.samples.len(),
            surface: counts[0],
            near: counts[1],
            uniform: counts[2],
            mesh_hash: hex(&ds.mesh_hash),
            frame,
        },
    )?;
    println!(
        "baked {} samples ({} surface, {} near, {} uniform) with n = {} in {elapsed:.2} s -> {}",
        ds.samples.len(),
        counts[0],
        counts[1],
        counts[2],
        ds.n,
        out.display()
    );
    Ok(())
}

/// Reference views and the frame they live in. Rendered views come from the normalized
/// mesh, so their frame is the mesh's; a saved scene is taken as already normalized.
fn resolve_views(a: &ViewArgs, cfg: &PipelineConfig) -> Result<(ViewSet, Option<Frame>, RigConfig)> {
    let rig = RigConfig {
        count: a.num_views.unwrap_or(cfg.views.count),
        size: a.view_size.unwrap_or(cfg.views.size),
    };
    if let Some(path) = &a.views {
        let views = load_view_set(path).with_context(|| format!("loading views {}", path.display()))?;
        let rig = RigConfig {
            count: views.len(),
            size: views.cameras[0].width,
        };
        return Ok((views, None, rig));
    }
    let Some(mesh_path) = a.mesh.clone().or_else(|| cfg.mesh.clone()) else {
        bail!(visfield::Error::InvalidInput("reference views need --mesh or --views".into()));
    };
    let (mesh, frame) = load_normalized(&mesh_path)?;
    Ok((render_rig(&mesh, rig)?, Some(frame), rig))
}

fn render_rig(mesh: &TriangleMesh, rig: RigConfig) -> Result<ViewSet> {
    if rig.count == 0 || rig.size < 8 {
        bail!(visfield::Error::InvalidInput("the rig needs at least one view of at least 8×8 pixels".into()));
    }
    Ok(render_view_set(mesh, default_rig(rig.count, rig.size, rig.size)?)?)
}

fn train_cmd(mut cfg: PipelineConfig, a: TrainArgs, has_config: bool) -> Result<()> {
    let ds = load_baked(&a.data).with_context(|| format!("loading bake {}", a.data.display()))?;
    if has_config && cfg.directions != ds.n {
        bail!(visfield::Error::Config(format!(
            "config asks for {} directions but {} was baked with {}",
            cfg.directions,
            a.data.display(),
            ds.n
        )));
    }
    cfg.directions = ds.n;
    let t = &mut cfg.train;
    t.epochs = a.epochs.unwrap_or(t.epochs);
    t.batch_size = a.batch_size.unwrap_or(t.batch_size);
    t.base_lr = a.base_lr.unwrap_or(t.base_lr);
    t.max_lr = a.max_lr.unwrap_or(t.max_lr);
    t.seed = cfg.seed;
    if a.no_transfer_loss {
        t.weights.transfer = 0.0;
    }
    if let Some(h) = a.hidden {
        cfg.arch.hidden = h;
    }
    cfg.validate()?;
    cfg.train.validate()?;
    let model_out = out_path(a.out, &cfg, "model.vfmd");
    let curve_out = out_path(a.curve, &cfg, "loss.csv");

    let (views, frame, rig) = resolve_views(&a.views, &cfg)?;
    if let Some(dir) = &a.save_views {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        save_view_set(&views, dir, "view")?;
    }
    let arch = cfg.architecture();
    let set = TrainingSet::new(&ds, &views, &arch, cfg.interp_k)?;

    #[derive(Serialize)]
    struct Effective<'a> {
        train: &'a TrainConfig,
        arch: Architecture,
        interp_k: usize,
        rig: RigConfig,
        data_seed: u64,
        mesh_hash: String,
        samples: usize,
    }
    let prov = Provenance::new(
        "train",
        &Effective {
            train: &cfg.train,
            arch,
            interp_k: cfg.interp_k,
            rig,
            data_seed: ds.seed,
            mesh_hash: hex(&ds.mesh_hash),
            samples: ds.samples.len(),
        },
    );

    let mut model = FieldModel::new(arch, cfg.seed)?;
    let file = File::create(&curve_out).with_context(|| format!("creating {}", curve_out.display()))?;
    let mut csv = BufWriter::new(file);
    writeln!(csv, "# {}", prov.line())?;
    writeln!(csv, "epoch,lr,total,visibility,transfer,occupancy,albedo,near_surface_accuracy")?;
    let started = Instant::now();
    let epochs = cfg.train.epochs;
    let mut io_err = None;
    let result = train(&mut model, &set, &cfg.train, |r| {
        let l = &r.loss;
        let row = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            r.epoch, r.lr, l.total, l.visibility, l.transfer, l.occupancy, l.albedo, l.near_surface_accuracy
        );
        if let Err(e) = row {
            io_err.get_or_insert(e);
        }
        if (r.epoch + 1) % 50 == 0 || r.epoch + 1 == epochs {
            log::info!("epoch {}/{epochs}: loss {:.5}, accuracy {:.4}", r.epoch + 1, l.total, l.near_surface_accuracy);
        }
    });
    csv.flush()?;
    if let Some(e) = io_err {
        return Err(e).with_context(|| format!("writing {}", curve_out.display()));
    }
    let history = result?;
    let meta = ModelMeta {
        provenance: prov,
        frame: frame.unwrap_or(Frame::IDENTITY),
        interp_k: cfg.interp_k,
        rig,
        domain: Some(sample_domain(&ds)),
    };
    model.provenance = serde_json::to_string(&meta).expect("meta serializes");
    save_model(&model, &model_out)?;
    let last = history.last().map(|r| r.loss).unwrap_or_default();
    println!(
        "trained {} epochs on {} samples in {:.1} s: loss {:.5}, near-surface accuracy {:.4} -> {}, {}",
        history.len(),
        set.len(),
        started.elapsed().as_secs_f64(),
        last.total,
        last.near_surface_accuracy,
        model_out.display(),
        curve_out.display()
    );
    Ok(())
}

fn sample_domain(ds: &BakedDataset) -> [[f64; 3]; 2] {
    let b = Aabb::from_points(ds.samples.iter().map(|s| &s.position));
    [b.min.to_array(), b.max.to_array()]
}

fn model_meta(model: &FieldModel) -> Option<ModelMeta> {
    serde_json::from_str(&model.provenance).ok()
}

fn reconstruct(cfg: PipelineConfig, a: ReconstructArgs) -> Result<()> {
    let model = load_model(&a.model, None).with_context(|| format!("loading model {}", a.model.display()))?;
    let meta = model_meta(&model);
    let mut cfg = cfg;
    if let Some(m) = &meta {
        // defaults follow the training run; flags still win
        cfg.views = m.rig;
        cfg.interp_k = m.interp_k;
    }
    cfg.directions = model.arch.directions;
    cfg.validate()?;
    let res = a.res.map(|r| r as usize).unwrap_or(cfg.grid_resolution);
    if !(8..=512).contains(&res) {
        bail!(visfield::Error::InvalidInput(format!("grid resolution {res} is outside 8..=512")));
    }
    let out = out_path(a.out, &cfg, "reconstruction.ply");
    let (views, view_frame, rig) = resolve_views(&a.views, &cfg)?;
    let frame = meta.as_ref().map(|m| m.frame).or(view_frame).unwrap_or(Frame::IDENTITY);
    let dirs = DirectionSet::fibonacci(model.arch.directions)?;
    let arch = model.arch;
    let k = cfg.interp_k;
    let min_component = a.min_component.unwrap_or(cfg.min_component);
    if !(0.0..=1.0).contains(&min_component) {
        bail!(visfield::Error::InvalidInput(format!("--min-component {min_component} is outside [0, 1]")));
    }

    #[derive(Serialize)]
    struct Effective {
        model_config: Option<String>,
        resolution: usize,
        rig: RigConfig,
        interp_k: usize,
        min_component: f64,
    }
    let prov = Provenance::new(
        "reconstruct",
        &Effective {
            model_config: meta.as_ref().map(|m| m.provenance.config_hash.clone()),
            resolution: res,
            rig,
            interp_k: k,
            min_component,
        },
    );

    let t = Instant::now();
    let cube = Aabb::new(Vec3::splat(-GRID_HALF_EXTENT), Vec3::splat(GRID_HALF_EXTENT));
    let bounds = match meta.as_ref().and_then(|m| m.domain) {
        Some([lo, hi]) => Aabb::new(
            Vec3::from_array(lo).max(cube.min),
            Vec3::from_array(hi).min(cube.max),
        ),
        None => cube,
    };
    let mut grid = sample_grid(bounds, res, |pts| {
        let prepared = prepare_points(&arch, pts, &views, &dirs, k)?;
        Ok(model.query(&prepared, true, false).occupancy)
    })?;
    // Pinning the outer shell to outside keeps every extracted component closed.
    for kk in 0..res {
        for j in 0..res {
            for i in 0..res {
                let edge = |v: usize| v == 0 || v == res - 1;
                if edge(i) || edge(j) || edge(kk) {
                    let idx = (kk * res + j) * res + i;
                    grid.values[idx] = grid.values[idx].min(-1.0);
                }
            }
        }
    }
    if let Some(v) = grid.values.iter().find(|v| !v.is_finite()) {
        bail!(visfield::Error::NonFinite(format!("occupancy logit {v} in the sampling grid")));
    }
    // occupancy 0.5 is logit 0
    let mut mesh = marching_cubes(&grid, 0.0)?;
    if min_component > 0.0 {
        mesh = mesh.without_small_components(min_component);
    }
    let prepared = prepare_points(&arch, &mesh.vertices, &views, &dirs, k)?;
    let z = model.query(&prepared, false, true).albedo;
    let albedo = z.chunks(3).map(|c| [sigmoid(c[0]), sigmoid(c[1]), sigmoid(c[2])]).collect();
    for v in &mut mesh.vertices {
        *v = frame.to_original(*v);
    }
    mesh.recompute_normals();
    let mesh = mesh.with_albedo(albedo)?;
    save_mesh_with_comments(&mesh, &out, &[prov.line()])?;
    println!(
        "reconstructed {} vertices / {} faces at {res}³ in {:.1} s (watertight: {}) -> {}",
        mesh.vertices.len(),
        mesh.faces.len(),
        t.elapsed().as_secs_f64(),
        mesh.is_watertight(),
        out.display()
    );
    Ok(())
}

fn relight(mut cfg: PipelineConfig, a: RelightArgs) -> Result<()> {
    let model = match &a.model {
        Some(p) => Some(load_model(p, None).with_context(|| format!("loading model {}", p.display()))?),
        None => None,
    };
    let meta = model.as_ref().and_then(model_meta);
    if let Some(m) = &meta {
        cfg.views = m.rig;
        cfg.interp_k = m.interp_k;
    }
    if let Some(m) = &model {
        cfg.directions = m.arch.directions;
    }
    let rig = RigConfig {
        count: a.num_views.unwrap_or(cfg.views.count),
        size: a.view_size.unwrap_or(cfg.views.size),
    };
    cfg.views = rig;
    let mesh_path = require_mesh(a.mesh, &cfg, "relight")?;
    let Some(light_path) = a.light.or_else(|| cfg.light.clone()) else {
        bail!(visfield::Error::InvalidInput("relight needs --light (or \"light\" in the config)".into()));
    };
    cfg.validate()?;
    let out_dir = a.out_dir.unwrap_or_else(|| cfg.output_dir.clone());
    std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    let light = load_light(&light_path)?;
    let (mesh, _) = load_normalized(&mesh_path)?;
    let dirs = DirectionSet::fibonacci(cfg.directions)?;
    let n = dirs.len();
    let offset: Vec<Vec3> = mesh
        .vertices
        .iter()
        .zip(&mesh.vertex_normals)
        .map(|(&v, &nrm)| v + nrm * SURFACE_OFFSET)
        .collect();
    let cameras = default_rig(rig.count, rig.size, rig.size)?;

    let (visibility, model_albedo): (Vec<f64>, Option<Vec<[f64; 3]>>) = match &model {
        Some(m) => {
            let views = render_rig(&mesh, rig)?;
            let prepared = prepare_points(&m.arch, &offset, &views, &dirs, cfg.interp_k)?;
            let q = m.query(&prepared, false, mesh.vertex_albedo.is_none());
            let alb = (!q.albedo.is_empty()).then(|| q.albedo.chunks(3).map(|c| [sigmoid(c[0]), sigmoid(c[1]), sigmoid(c[2])]).collect());
            (q.visibility.into_iter().map(sigmoid).collect(), alb)
        }
        None => {
            let bvh = Bvh::build(&mesh)?;
            let vis = offset.iter().flat_map(|&p| trace_visibility(&bvh, p, &dirs).to_values()).collect();
            (vis, None)
        }
    };
    if let Some(v) = visibility.iter().find(|v| !v.is_finite()) {
        bail!(visfield::Error::NonFinite(format!("predicted visibility {v}")));
    }
    let transfer = visibility
        .chunks(n)
        .zip(&mesh.vertex_normals)
        .map(|(vis, &nrm)| transfer_vector(vis, nrm, &dirs))
        .collect();
    let albedo = mesh
        .vertex_albedo
        .clone()
        .or(model_albedo)
        .unwrap_or_else(|| vec![[1.0; 3]; mesh.vertices.len()]);
    let bvh = Bvh::build(&mesh)?;
    let prt = PrtMesh::new(mesh, transfer, albedo)?;

    #[derive(Serialize)]
    struct Effective {
        visibility: &'static str,
        model_config: Option<String>,
        directions: usize,
        rig: RigConfig,
        interp_k: usize,
        irradiance: bool,
    }
    let prov = Provenance::new(
        "relight",
        &Effective {
            visibility: if model.is_some() { "model" } else { "oracle" },
            model_config: meta.as_ref().map(|m| m.provenance.config_hash.clone()),
            directions: n,
            rig,
            interp_k: cfg.interp_k,
            irradiance: a.irradiance,
        },
    );
    let (ext, mask_ext) = match a.format {
        ImageFormat::Pfm => ("pfm", "pfm"),
        ImageFormat::Ppm => ("ppm", "pgm"),
    };
    let encode = |img: Image| if a.format == ImageFormat::Ppm { tone_map(&img) } else { img };
    let mut written = Vec::new();
    let mut save = |img: Image, name: String| -> Result<()> {
        save_image(&img, out_dir.join(&name))?;
        written.push(name);
        Ok(())
    };
    for (i, cam) in cameras.iter().enumerate() {
        let (rgb, alpha) = render_image(&prt, &bvh, cam, &light, RenderMode::Shaded);
        save(encode(rgb), format!("relight_{i}.{ext}"))?;
        save(alpha, format!("mask_{i}.{mask_ext}"))?;
        if a.irradiance {
            let (irr, _) = render_image(&prt, &bvh, cam, &light, RenderMode::Irradiance);
            save(encode(irr), format!("irradiance_{i}.{ext}"))?;
        }
    }

    #[derive(Serialize)]
    struct Manifest<'a> {
        #[serde(flatten)]
        provenance: &'a Provenance,
        cameras: &'a [Camera],
        images: &'a [String],
    }
    write_json(
        &out_dir.join("relight.json"),
        &Manifest {
            provenance: &prov,
            cameras: &cameras,
            images: &written,
        },
    )?;
    println!("relit {} views -> {}", cameras.len(), out_dir.display());
    Ok(())
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    #[serde(flatten)]
    provenance: &'a Provenance,
    #[serde(flatten)]
    metrics: T,
}

fn emit<T: Serialize>(out: Option<PathBuf>, report: &T) -> Result<()> {
    match out {
        Some(p) => write_json(&p, report),
        None => {
            println!("{}", serde_json::to_string_pretty(report).expect("report serializes"));
            Ok(())
        }
    }
}

fn eval_geometry(cfg: PipelineConfig, a: EvalGeometryArgs) -> Result<()> {
    if !(a.tau > 0.0) || a.samples == 0 {
        bail!(visfield::Error::InvalidInput("--tau and --samples must be positive".into()));
    }
    let pred = load_mesh(&a.pred).with_context(|| format!("loading {}", a.pred.display()))?;
    let gt = load_mesh(&a.gt).with_context(|| format!("loading {}", a.gt.display()))?;

    #[derive(Serialize)]
    struct Effective {
        samples: usize,
        tau: f64,
        seed: u64,
    }
    let prov = Provenance::new(
        "eval geometry",
        &Effective {
            samples: a.samples,
            tau: a.tau,
            seed: cfg.seed,
        },
    );
    let metrics: MetricReport = evaluate_geometry(&pred, &gt, a.tau, a.samples, cfg.seed)?;
    emit(a.out, &Report { provenance: &prov, metrics })
}

fn eval_image(_cfg: PipelineConfig, a: EvalImageArgs) -> Result<()> {
    let pred = load_image(&a.pred).with_context(|| format!("loading {}", a.pred.display()))?;
    let gt = load_image(&a.gt).with_context(|| format!("loading {}", a.gt.display()))?;
    let mask = match &a.mask {
        Some(p) => Some(load_image(p).with_context(|| format!("loading {}", p.display()))?),
        None => None,
    };

    #[derive(Serialize)]
    struct Metrics {
        psnr: f64,
        ssim: f64,
        masked: bool,
    }
    let metrics = Metrics {
        psnr: psnr(&pred, &gt, mask.as_ref())?,
        ssim: ssim(&pred, &gt, mask.as_ref())?,
        masked: mask.is_some(),
    };
    let prov = Provenance::new("eval image", &metrics.masked);
    emit(a.out, &Report { provenance: &prov, metrics })
}

fn interp_acc(cfg: PipelineConfig, a: InterpArgs) -> Result<()> {
    if a.n.is_empty() {
        bail!(visfield::Error::InvalidInput("--n needs at least one direction count".into()));
    }
    let k = a.k.unwrap_or(cfg.interp_k);
    if k == 0 || a.n.iter().any(|&n| n < k) {
        bail!(visfield::Error::InvalidInput(format!("every direction count must be at least k = {k}")));
    }
    let mesh_path = require_mesh(a.mesh, &cfg, "interp-acc")?;
    let (mesh, _) = load_normalized(&mesh_path)?;
    let out = out_path(a.out, &cfg, "interp_acc.csv");

    #[derive(Serialize)]
    struct Effective<'a> {
        n: &'a [usize],
        points: usize,
        test_dirs: usize,
        k: usize,
        seed: u64,
    }
    let prov = Provenance::new(
        "interp-acc",
        &Effective {
            n: &a.n,
            points: a.points,
            test_dirs: a.test_dirs,
            k,
            seed: cfg.seed,
        },
    );
    let mut text = format!("# {}\nn,accuracy\n", prov.line());
    for &n in &a.n {
        let dirs = DirectionSet::fibonacci(n)?;
        let acc = interpolation_accuracy(&mesh, &dirs, a.points, a.test_dirs, k, cfg.seed)?;
        println!("n = {n}: accuracy {acc:.4}");
        text.push_str(&format!("{n},{acc}\n"));
    }
    std::fs::write(&out, text).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}
