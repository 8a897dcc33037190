//! End-to-end sample generation, batch output and inference preprocessing.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::GeneratorConfig;
use crate::deform::{
    compose_transforms, integrate_svf, integration_steps, sample_affine, sample_svf, upsample_svf, warp_labels,
};
use crate::error::{Error, Result, StageContext};
use crate::intensity::{apply_bias, gamma_augment, rescale_minmax, sample_bias_field, sample_gmm_params, synth_gmm_image, Rescaled};
use crate::manifest::{SampleManifest, MANIFEST_VERSION};
use crate::nifti::{write_nifti, DataType};
use crate::resolution::{sample_resolution, simulate_lr};
use crate::rng::{derive_seed, sample_rng, StreamRng};
use crate::sampling::chance;
use crate::schema::LabelSchema;
use crate::target::{build_target, lesion_dropout, simulate_skullstrip};
use crate::volume::{crop_random, flip_lr, resample, ImageVolume, Interpolation, LabelVolume};
use rand::Rng;

const STREAM_TAG: &str = "labelsynth/sample";

/// One synthetic training pair.
#[derive(Clone, Debug)]
pub struct SamplePair {
    /// Synthetic image in [0, 1].
    pub image: ImageVolume,
    /// Segmentation target.
    pub target: LabelVolume,
    /// The deformed label map the image was synthesised from.
    pub labels: LabelVolume,
    pub manifest: SampleManifest,
    pub warnings: Vec<String>,
}

fn spatial_stage(
    labels: &LabelVolume,
    cfg: &GeneratorConfig,
    rng: &mut StreamRng,
    m: &mut SampleManifest,
) -> Result<LabelVolume> {
    let affine = sample_affine(cfg, rng);
    let svf = sample_svf(cfg, rng);
    let dims = labels.dims();
    let velocity = upsample_svf(&svf, dims, labels.spacing())?;
    let steps = integration_steps(&velocity, cfg.min_integration_steps);
    let nonlin = integrate_svf(&velocity, steps)?;
    let total = compose_transforms(&affine.voxel_matrix(dims, labels.spacing()), &nonlin)?;
    m.affine = affine;
    m.svf_sigma = svf.sigma;
    m.integration_steps = steps;
    warp_labels(labels, &total)
}

fn crop_stage(
    labels: &LabelVolume,
    cfg: &GeneratorConfig,
    rng: &mut StreamRng,
    m: &mut SampleManifest,
) -> Result<LabelVolume> {
    let dims = labels.dims();
    let size = std::array::from_fn(|a| cfg.crop_size[a].min(dims[a]));
    let (cropped, offset) = crop_random(labels, size, rng)?;
    m.crop_offset = offset;
    m.crop_size = size;
    Ok(cropped)
}

/// Generates sample `index` from `maps`. The result depends only on the
/// arguments, never on scheduling.
pub fn generate_sample(
    maps: &[LabelVolume],
    cfg: &GeneratorConfig,
    schema: &LabelSchema,
    index: u64,
) -> Result<SamplePair> {
    if maps.is_empty() {
        return Err(Error::invalid("no label maps to sample from"));
    }
    cfg.validate()?;
    let mut rng = sample_rng(cfg.seed, index);
    let mut warnings = Vec::new();
    let mut m = SampleManifest {
        version: MANIFEST_VERSION,
        sample_index: index,
        master_seed: cfg.seed,
        stream_key: hex::encode(derive_seed(STREAM_TAG, cfg.seed, index)),
        map_index: 0,
        map_count: maps.len(),
        map_digest: String::new(),
        stages: Vec::new(),
        flipped: false,
        crop_offset: [0; 3],
        crop_size: [0; 3],
        skull_strip: crate::target::SkullStrip::None,
        lesions_kept: true,
        affine: Default::default(),
        svf_sigma: 0.0,
        integration_steps: 0,
        gmm: Default::default(),
        bias_sigma: 0.0,
        rescale_degenerate: false,
        gamma: 0.0,
        resolution: crate::resolution::ResolutionParams::native(cfg.r_hr, 0.0),
        output_dims: [0; 3],
        output_spacing: [0.0; 3],
        image_digest: String::new(),
        target_digest: String::new(),
        schema_digest: schema.digest(),
        config: cfg.clone(),
    };

    m.stages.push("select".into());
    m.map_index = rng.random_range(0..maps.len());
    let source = &maps[m.map_index];
    m.map_digest = source.digest();
    let mut labels = if source.spacing().iter().all(|&s| (s - cfg.r_hr).abs() <= 1e-6 * cfg.r_hr) {
        source.clone()
    } else {
        resample(source, [cfg.r_hr; 3], Interpolation::Nearest).stage("select")?
    };
    let unknown: Vec<i32> = labels.labels().into_iter().filter(|&l| schema.entry(l).is_none()).collect();
    if !unknown.is_empty() {
        return Err(Error::Schema(format!(
            "map {} uses labels missing from the schema: {unknown:?}",
            m.map_index
        )))
        .stage("select");
    }

    m.stages.push("flip".into());
    m.flipped = chance(&mut rng, cfg.flip_prob);
    if m.flipped {
        labels = flip_lr(&labels, &schema.flip_table()).stage("flip")?;
    }

    if cfg.crop_before_deform {
        m.stages.push("crop".into());
        labels = crop_stage(&labels, cfg, &mut rng, &mut m).stage("crop")?;
    }

    m.stages.push("skull_strip".into());
    let (stripped, branch) = simulate_skullstrip(&labels, schema, &mut rng);
    m.skull_strip = branch;

    m.stages.push("lesions".into());
    let (with_lesions, kept) = lesion_dropout(&stripped, schema, &mut rng).stage("lesions")?;
    m.lesions_kept = kept;

    m.stages.push("deform".into());
    let mut labels = spatial_stage(&with_lesions, cfg, &mut rng, &mut m).stage("deform")?;

    if !cfg.crop_before_deform {
        m.stages.push("crop".into());
        labels = crop_stage(&labels, cfg, &mut rng, &mut m).stage("crop")?;
    }

    m.stages.push("gmm".into());
    let gmm = sample_gmm_params(cfg, &labels.labels(), &mut rng).stage("gmm")?;
    let image = synth_gmm_image(&labels, &gmm, &mut rng).stage("gmm")?;
    m.gmm = gmm;

    m.stages.push("bias".into());
    let (bias, bias_params) = sample_bias_field(cfg, labels.dims(), &mut rng).stage("bias")?;
    let image = apply_bias(&image, &bias).stage("bias")?;
    m.bias_sigma = bias_params.sigma;

    m.stages.push("rescale".into());
    let Rescaled { volume: image, degenerate } = rescale_minmax(&image, 0.0, 100.0).stage("rescale")?;
    m.rescale_degenerate = degenerate;
    if degenerate {
        warnings.push(format!("sample {index}: constant synthetic image, rescaled to zeros"));
    }

    m.stages.push("gamma".into());
    let (image, gamma) = gamma_augment(&image, cfg, &mut rng).stage("gamma")?;
    m.gamma = gamma;

    m.stages.push("resolution".into());
    let params = sample_resolution(cfg, &mut rng).stage("resolution")?;
    let image = simulate_lr(&image, &params).stage("resolution")?;
    m.resolution = params;

    m.stages.push("target".into());
    let target = build_target(&labels, schema);

    m.output_dims = image.dims();
    m.output_spacing = image.spacing();
    m.image_digest = image.digest();
    m.target_digest = target.digest();
    Ok(SamplePair {
        image,
        target,
        labels,
        manifest: m,
        warnings,
    })
}

/// Regenerates the sample described by `manifest` and checks that every
/// recorded draw and output digest matches.
pub fn replay_manifest(maps: &[LabelVolume], schema: &LabelSchema, manifest: &SampleManifest) -> Result<SamplePair> {
    if manifest.schema_digest != schema.digest() {
        return Err(Error::ReplayMismatch("schema digest differs".into()));
    }
    let pair = generate_sample(maps, &manifest.config, schema, manifest.sample_index)?;
    if pair.manifest != *manifest {
        let a = serde_json::to_value(&pair.manifest).expect("manifest serialises");
        let b = serde_json::to_value(manifest).expect("manifest serialises");
        let differing: Vec<String> = match (a, b) {
            (serde_json::Value::Object(a), serde_json::Value::Object(b)) => {
                a.iter().filter(|(k, v)| b.get(*k) != Some(*v)).map(|(k, _)| k.clone()).collect()
            }
            _ => vec![],
        };
        return Err(Error::ReplayMismatch(format!("fields differ: {}", differing.join(", "))));
    }
    Ok(pair)
}

/// Output paths of one sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleFiles {
    pub image: PathBuf,
    pub target: PathBuf,
    pub manifest: PathBuf,
}

impl SampleFiles {
    pub fn new(dir: &Path, index: u64) -> Self {
        SampleFiles {
            image: dir.join(format!("sample_{index:05}_image.nii.gz")),
            target: dir.join(format!("sample_{index:05}_target.nii.gz")),
            manifest: dir.join(format!("sample_{index:05}.manifest")),
        }
    }

    pub fn complete(&self) -> bool {
        self.image.is_file() && self.target.is_file() && self.manifest.is_file()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleFailure {
    pub index: u64,
    pub message: String,
}

#[derive(Clone, Debug, Default)]
pub struct BatchReport {
    pub generated: Vec<u64>,
    /// Indices whose files were already complete.
    pub skipped: Vec<u64>,
    pub failures: Vec<SampleFailure>,
    pub warnings: Vec<String>,
    /// Wall time per generated sample, in milliseconds.
    pub timings_ms: Vec<(u64, u128)>,
}

impl BatchReport {
    pub fn files(&self, dir: &Path) -> Vec<SampleFiles> {
        let mut all: Vec<u64> = self.generated.iter().chain(&self.skipped).copied().collect();
        all.sort_unstable();
        all.into_iter().map(|i| SampleFiles::new(dir, i)).collect()
    }
}

fn temp_path(path: &Path) -> PathBuf {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    // Keep the .gz suffix so the writer still compresses.
    path.with_file_name(format!(".partial.{name}"))
}

fn rename(from: &Path, to: &Path) -> Result<()> {
    fs::rename(from, to).map_err(|e| Error::io(to, e))
}

/// Writes a sample's three files. Each is written under a temporary name and
/// renamed into place, manifest last, so a complete manifest implies
/// complete images.
pub fn write_sample(pair: &SamplePair, files: &SampleFiles) -> Result<()> {
    let tmp_image = temp_path(&files.image);
    let tmp_target = temp_path(&files.target);
    let tmp_manifest = temp_path(&files.manifest);
    write_nifti(&pair.image, &tmp_image, DataType::Float32, false)?;
    write_nifti(&pair.target, &tmp_target, DataType::Int32, false)?;
    pair.manifest.write(&tmp_manifest)?;
    rename(&tmp_image, &files.image)?;
    rename(&tmp_target, &files.target)?;
    rename(&tmp_manifest, &files.manifest)
}

/// Generates samples `0..count` into `out_dir` using `workers` threads
/// (0 = all cores). Complete samples already on disk are skipped, and a
/// failing sample does not stop the others.
pub fn generate_batch(
    maps: &[LabelVolume],
    cfg: &GeneratorConfig,
    schema: &LabelSchema,
    count: u64,
    out_dir: &Path,
    workers: usize,
) -> Result<BatchReport> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;

    enum Outcome {
        Done(Vec<String>, u128),
        Skipped,
        Failed(String),
    }

    let outcomes: Vec<(u64, Outcome)> = pool.install(|| {
        (0..count)
            .into_par_iter()
            .map(|i| {
                let files = SampleFiles::new(out_dir, i);
                if files.complete() {
                    return (i, Outcome::Skipped);
                }
                let start = std::time::Instant::now();
                let result = generate_sample(maps, cfg, schema, i).and_then(|pair| {
                    write_sample(&pair, &files)?;
                    Ok(pair.warnings)
                });
                match result {
                    Ok(w) => (i, Outcome::Done(w, start.elapsed().as_millis())),
                    Err(e) => (i, Outcome::Failed(e.to_string())),
                }
            })
            .collect()
    });

    let mut report = BatchReport::default();
    for (i, outcome) in outcomes {
        match outcome {
            Outcome::Done(w, ms) => {
                report.generated.push(i);
                report.warnings.extend(w);
                report.timings_ms.push((i, ms));
            }
            Outcome::Skipped => report.skipped.push(i),
            Outcome::Failed(message) => report.failures.push(SampleFailure { index: i, message }),
        }
    }
    Ok(report)
}

/// Resamples a scan to isotropic `r_hr` and maps its 1st and 99th
/// percentiles to 0 and 1.
pub fn preprocess_for_inference(scan: &ImageVolume, r_hr: f64) -> Result<Rescaled> {
    if !(r_hr > 0.0) {
        return Err(Error::invalid(format!("target resolution must be positive, got {r_hr}")));
    }
    let resampled = resample(scan, [r_hr; 3], Interpolation::Trilinear)?;
    rescale_minmax(&resampled, 1.0, 99.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::phantom_brain;

    fn small_cfg() -> GeneratorConfig {
        GeneratorConfig {
            crop_size: [32, 32, 32],
            ..GeneratorConfig::default()
        }
    }

    #[test]
    fn default_sample_contract() {
        let maps = vec![phantom_brain([40, 40, 40])];
        let schema = LabelSchema::default_brain();
        let pair = generate_sample(&maps, &small_cfg(), &schema, 0).unwrap();
        assert_eq!(pair.image.dims(), [32, 32, 32]);
        assert!(pair.image.same_geometry(&pair.target));
        let (lo, hi) = pair.image.min_max();
        assert!(lo >= 0.0 && hi <= 1.0);
        let allowed = schema.target_labels();
        assert!(pair.target.labels().iter().all(|l| allowed.contains(l)));
        assert_eq!(build_target(&pair.labels, &schema), pair.target);
        assert_eq!(
            pair.manifest.stages,
            ["select", "flip", "crop", "skull_strip", "lesions", "deform", "gmm", "bias", "rescale", "gamma", "resolution", "target"]
        );
    }

    #[test]
    fn crop_after_deform_order() {
        let maps = vec![phantom_brain([36, 36, 36])];
        let cfg = GeneratorConfig {
            crop_before_deform: false,
            ..small_cfg()
        };
        let pair = generate_sample(&maps, &cfg, &LabelSchema::default_brain(), 3).unwrap();
        assert_eq!(pair.manifest.stages[4..7], ["deform", "crop", "gmm"]);
        assert_eq!(pair.image.dims(), [32, 32, 32]);
    }

    #[test]
    fn randomness_disabled_gives_mean_map() {
        let maps = vec![phantom_brain([24, 24, 24])];
        let cfg = GeneratorConfig {
            a_rot: 0.0,
            b_rot: 0.0,
            a_sc: 1.0,
            b_sc: 1.0,
            a_sh: 0.0,
            b_sh: 0.0,
            a_tr: 0.0,
            b_tr: 0.0,
            b_nonlin: 0.0,
            a_sigma: 0.0,
            b_sigma: 0.0,
            b_bias: 0.0,
            gamma_variance: 0.0,
            b_res: 1.0,
            a_alpha: 0.0,
            b_alpha: 0.0,
            flip_prob: 0.0,
            crop_size: [16, 16, 16],
            ..GeneratorConfig::default()
        };
        let schema = LabelSchema::default_brain();
        let pair = generate_sample(&maps, &cfg, &schema, 1).unwrap();
        let m = &pair.manifest;
        let cropped = crate::volume::crop(&maps[0], m.crop_offset, m.crop_size).unwrap();
        let stripped = crate::target::apply_skullstrip(&cropped, &schema, m.skull_strip);
        let expected_labels = if m.lesions_kept {
            stripped
        } else {
            crate::target::drop_lesions(&stripped, &schema).unwrap()
        };
        assert_eq!(pair.labels, expected_labels);
        let means: Vec<f64> = pair.labels.data().iter().map(|&l| m.gmm.get(l).unwrap().mean).collect();
        let (lo, hi) = means.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        for (v, mu) in pair.image.data().iter().zip(&means) {
            let want = ((mu - lo) / (hi - lo)) as f32;
            assert!((v - want).abs() < 1e-6);
        }
        assert_eq!(pair.target, build_target(&expected_labels, &schema));
    }

    #[test]
    fn replay_and_mismatch() {
        let maps = vec![phantom_brain([34, 34, 34]), phantom_brain([33, 35, 34])];
        let schema = LabelSchema::default_brain();
        let cfg = small_cfg();
        let a = generate_sample(&maps, &cfg, &schema, 5).unwrap();
        let b = replay_manifest(&maps, &schema, &a.manifest).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.target, b.target);
        let mut tampered = a.manifest.clone();
        tampered.gamma += 1e-9;
        assert!(matches!(replay_manifest(&maps, &schema, &tampered), Err(Error::ReplayMismatch(_))));
        let json = a.manifest.to_json();
        assert_eq!(SampleManifest::from_json(&json).unwrap(), a.manifest);
    }

    #[test]
    fn stage_errors_are_annotated() {
        let maps = vec![LabelVolume::filled([8, 8, 8], [1.0; 3], 12345).unwrap()];
        let cfg = GeneratorConfig {
            flip_prob: 1.0,
            crop_size: [8, 8, 8],
            ..GeneratorConfig::default()
        };
        match generate_sample(&maps, &cfg, &LabelSchema::default_brain(), 0) {
            Err(Error::Stage { stage, .. }) => assert_eq!(stage, "select"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(generate_sample(&[], &cfg, &LabelSchema::default_brain(), 0).is_err());
    }

    #[test]
    fn preprocess_geometry_and_outliers() {
        let scan = ImageVolume::from_fn([8, 8, 6], [1.0, 1.0, 5.0], |x, y, z| (x + y + z) as f32).unwrap();
        let out = preprocess_for_inference(&scan, 1.0).unwrap().volume;
        assert_eq!(out.dims(), [8, 8, 30]);
        assert_eq!(out.spacing(), [1.0; 3]);
        let (lo, hi) = out.min_max();
        assert!(lo >= 0.0 && hi <= 1.0);
        let flat = ImageVolume::filled([4, 4, 4], [1.0; 3], 2.0).unwrap();
        assert!(preprocess_for_inference(&flat, 1.0).unwrap().degenerate);
    }
}
