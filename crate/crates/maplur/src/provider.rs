//! Slippy-map tile providers: a local `z/x/y.png` tree and an HTTP URL
//! template with rate limiting, retries and an on-disk cache.

use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use maplur_core::geo::TileIndex;
use maplur_core::scene::{ChannelSemantics, TileImage};

use crate::error::{Error, IoContext, Result};
use crate::io;

/// Environment variable naming the tile cache directory.
pub const CACHE_DIR_ENV: &str = "MAPLUR_TILE_CACHE";

pub const FETCH_ATTEMPTS: usize = 3;

pub trait TileProvider: Send + Sync {
    fn fetch(&self, index: TileIndex) -> Result<TileImage>;
}

fn tile_rel_path(index: TileIndex) -> PathBuf {
    PathBuf::from(index.z.to_string()).join(index.x.to_string()).join(format!("{}.png", index.y))
}

/// Tiles read from `<root>/<z>/<x>/<y>.png`.
#[derive(Clone, Debug)]
pub struct LocalProvider {
    pub root: PathBuf,
}

impl TileProvider for LocalProvider {
    fn fetch(&self, index: TileIndex) -> Result<TileImage> {
        let path = self.root.join(tile_rel_path(index));
        if !path.is_file() {
            return Err(Error::data(&path, "tile not found"));
        }
        io::read_png(&path, ChannelSemantics::Map)
    }
}

/// Byte transport behind [`HttpProvider`]; swapped out in tests.
pub trait Transport: Send + Sync {
    fn get(&self, url: &str) -> std::result::Result<Vec<u8>, String>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(user_agent: &str) -> Self {
        Self { agent: ureq::AgentBuilder::new().user_agent(user_agent).timeout(Duration::from_secs(30)).build() }
    }
}

impl Transport for UreqTransport {
    fn get(&self, url: &str) -> std::result::Result<Vec<u8>, String> {
        let resp = self.agent.get(url).call().map_err(|e| e.to_string())?;
        let mut bytes = Vec::new();
        std::io::Read::read_to_end(&mut resp.into_reader(), &mut bytes).map_err(|e| e.to_string())?;
        Ok(bytes)
    }
}

/// Tiles fetched from a URL template containing `{z}`, `{x}` and `{y}`.
pub struct HttpProvider {
    pub template: String,
    pub cache_dir: Option<PathBuf>,
    /// Minimum spacing between requests.
    pub min_interval: Duration,
    /// First retry delay; doubles with each further attempt.
    pub backoff: Duration,
    transport: Box<dyn Transport>,
    last_request: Mutex<Option<Instant>>,
}

impl HttpProvider {
    pub fn new(template: &str, transport: Box<dyn Transport>) -> Result<Self> {
        for key in ["{z}", "{x}", "{y}"] {
            if !template.contains(key) {
                return Err(Error::Config(format!("tile URL template lacks {key}")));
            }
        }
        Ok(Self {
            template: template.to_string(),
            cache_dir: std::env::var_os(CACHE_DIR_ENV).map(PathBuf::from),
            min_interval: Duration::from_millis(100),
            backoff: Duration::from_millis(500),
            transport,
            last_request: Mutex::new(None),
        })
    }

    pub fn with_cache(mut self, dir: Option<PathBuf>) -> Self {
        self.cache_dir = dir;
        self
    }

    pub fn with_timing(mut self, min_interval: Duration, backoff: Duration) -> Self {
        self.min_interval = min_interval;
        self.backoff = backoff;
        self
    }

    pub fn url(&self, index: TileIndex) -> String {
        self.template
            .replace("{z}", &index.z.to_string())
            .replace("{x}", &index.x.to_string())
            .replace("{y}", &index.y.to_string())
    }

    fn throttle(&self) {
        let mut last = self.last_request.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(t) = *last {
            let wait = self.min_interval.saturating_sub(t.elapsed());
            if !wait.is_zero() {
                std::thread::sleep(wait);
            }
        }
        *last = Some(Instant::now());
    }

    fn download(&self, url: &str) -> Result<Vec<u8>> {
        let mut last_err = String::new();
        for attempt in 0..FETCH_ATTEMPTS {
            if attempt > 0 {
                std::thread::sleep(self.backoff * (1 << (attempt - 1)));
            }
            self.throttle();
            match self.transport.get(url) {
                Ok(bytes) => return Ok(bytes),
                Err(e) => last_err = e,
            }
        }
        Err(Error::Fetch(format!("{url}: {FETCH_ATTEMPTS} attempts failed, last: {last_err}")))
    }
}

impl TileProvider for HttpProvider {
    fn fetch(&self, index: TileIndex) -> Result<TileImage> {
        let cached = self.cache_dir.as_ref().map(|d| d.join(tile_rel_path(index)));
        if let Some(path) = cached.as_ref().filter(|p| p.is_file()) {
            return io::read_png(path, ChannelSemantics::Map);
        }
        let url = self.url(index);
        let bytes = self.download(&url)?;
        let tile = io::decode_png(&bytes, ChannelSemantics::Map, Path::new(&url))?;
        if let Some(path) = cached {
            io::write_atomic(&path, &bytes)?;
        }
        Ok(tile)
    }
}

/// Fetches every tile of `z` intersecting the lon/lat box into
/// `<out>/<z>/<x>/<y>.png`, with at most `jobs` fetches in flight.
pub fn fetch_area(
    provider: &dyn TileProvider,
    min: TileIndex,
    max: TileIndex,
    out: &Path,
    jobs: usize,
) -> Result<Vec<TileIndex>> {
    let mut indices = Vec::new();
    for x in min.x.min(max.x)..=min.x.max(max.x) {
        for y in min.y.min(max.y)..=min.y.max(max.y) {
            indices.push(TileIndex::new(min.z, x, y)?);
        }
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| {
        use rayon::prelude::*;
        indices.par_iter().try_for_each(|&idx| -> Result<()> {
            let tile = provider.fetch(idx)?;
            let path = out.join(tile_rel_path(idx));
            io::write_atomic(&path, &io::tile_png(&tile)?)
        })
    })?;
    std::fs::create_dir_all(out).at(out)?;
    Ok(indices)
}
