use std::path::{Path, PathBuf};

use anyhow::Context;
use fasctrack::ingest::{load_frame_sequence, load_image};
use fasctrack::report::{overlay_file_name, render_overlay, save_overlay, write_results, OverlayStyle};
use fasctrack::{process_sequence, FrameResult, FrameSequence, FrameSource, FrameStatus, SegmentationBackend};

use crate::config::{BackendSpec, InputSpec, RunConfig};

/// What an analysis run produced.
#[derive(Debug)]
pub struct AnalyzeOutcome {
    pub results: Vec<FrameResult>,
    pub csv: PathBuf,
    pub overlays: Vec<PathBuf>,
}

impl AnalyzeOutcome {
    pub fn failed_frames(&self) -> usize {
        self.results.iter().filter(|r| r.is_failed()).count()
    }
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "frame".to_string())
}

fn load_input(cfg: &RunConfig) -> anyhow::Result<(FrameSequence, String)> {
    match &cfg.input {
        InputSpec::Image(path) => {
            let frame = load_image(path)?;
            Ok((
                FrameSequence {
                    frames: vec![frame],
                    fps: None,
                },
                file_stem(path),
            ))
        }
        InputSpec::Video(path) => {
            let source = if path.is_dir() {
                FrameSource::Directory(path.clone())
            } else {
                FrameSource::Video {
                    input: path.clone(),
                    decoder: cfg.decoder.clone(),
                }
            };
            Ok((load_frame_sequence(&source, cfg.fps)?, file_stem(path)))
        }
    }
}

fn build_backend(spec: &BackendSpec) -> anyhow::Result<SegmentationBackend> {
    Ok(match spec {
        BackendSpec::Models { aponeurosis, fascicle } => SegmentationBackend::from_models(aponeurosis, fascicle)?,
        BackendSpec::Masks(template) => SegmentationBackend::from_masks(template.clone()),
    })
}

/// Run the pipeline and write the results CSV plus overlays.
///
/// A single image always gets an overlay, next to the CSV unless an overlay
/// directory is configured. Sequences only get overlays on request.
pub fn run_analyze(cfg: &RunConfig) -> anyhow::Result<AnalyzeOutcome> {
    let backend = build_backend(&cfg.backend)?;
    let (seq, stem) = load_input(cfg)?;
    let results = process_sequence(&seq, &backend, &cfg.pipeline, cfg.workers);

    if let Some(parent) = cfg.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    write_results(&results, &cfg.out)?;

    let overlay_dir = match (&cfg.overlays, &cfg.input) {
        (Some(dir), _) => Some(dir.clone()),
        (None, InputSpec::Image(_)) => Some(
            cfg.out
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_default(),
        ),
        (None, InputSpec::Video(_)) => None,
    };
    let mut overlays = Vec::new();
    if let Some(dir) = overlay_dir {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        let style = OverlayStyle::default();
        for (frame, result) in seq.frames.iter().zip(&results) {
            let path = dir.join(overlay_file_name(&stem, frame.index));
            save_overlay(&render_overlay(frame, result, &style), &path)?;
            overlays.push(path);
        }
    }

    for r in &results {
        if let FrameStatus::Failed(msg) = &r.status {
            eprintln!("warning: frame {}: {msg}", r.index);
        }
    }

    Ok(AnalyzeOutcome {
        results,
        csv: cfg.out.clone(),
        overlays,
    })
}
