use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Duration;

use flate2::read::GzDecoder;

use super::CorpusError;

/// Makes a repository available under `dest`. The locator is either an
/// http(s) URL of a `.tar.gz` archive, a local archive, or a local
/// directory (returned as is). When the archive unpacks to a single
/// top-level directory, that directory is returned.
pub fn fetch_remote(repo_locator: &str, dest: &Path) -> Result<PathBuf, CorpusError> {
    let bytes = if repo_locator.starts_with("http://") || repo_locator.starts_with("https://") {
        download(repo_locator)?
    } else {
        let local = Path::new(repo_locator);
        if local.is_dir() {
            return Ok(local.to_path_buf());
        }
        std::fs::read(local).map_err(|e| CorpusError::ArchiveError(format!("{repo_locator}: {e}")))?
    };
    unpack(&bytes, dest)
}

fn download(url: &str) -> Result<Vec<u8>, CorpusError> {
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(120))
        .build()
        .map_err(|e| CorpusError::NetworkError(e.to_string()))?;
    let resp = client.get(url).send().map_err(|e| CorpusError::NetworkError(e.to_string()))?;
    if !resp.status().is_success() {
        return Err(CorpusError::NetworkError(format!("{url}: HTTP {}", resp.status())));
    }
    let mut body = Vec::new();
    resp.take(u64::MAX).read_to_end(&mut body).map_err(|e| CorpusError::NetworkError(e.to_string()))?;
    Ok(body)
}

fn unpack(bytes: &[u8], dest: &Path) -> Result<PathBuf, CorpusError> {
    std::fs::create_dir_all(dest)?;
    let mut archive = tar::Archive::new(GzDecoder::new(bytes));
    archive.unpack(dest).map_err(|e| CorpusError::ArchiveError(e.to_string()))?;
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dest)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
    entries.sort();
    match entries.as_slice() {
        [only] if only.is_dir() => Ok(only.clone()),
        [] => Err(CorpusError::ArchiveError("archive is empty".into())),
        _ => Ok(dest.to_path_buf()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;
    use std::net::TcpListener;

    fn archive() -> Vec<u8> {
        let mut builder = tar::Builder::new(flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default()));
        let body = b"a,b\n1,2\n";
        let mut header = tar::Header::new_gnu();
        header.set_size(body.len() as u64);
        header.set_mode(0o644);
        header.set_cksum();
        builder.append_data(&mut header, "proj-main/data.csv", &body[..]).unwrap();
        builder.into_inner().unwrap().finish().unwrap()
    }

    #[test]
    fn local_archive_unpacks_to_single_root() {
        let dir = tempfile::tempdir().unwrap();
        let tgz = dir.path().join("a.tar.gz");
        std::fs::write(&tgz, archive()).unwrap();
        let root = fetch_remote(tgz.to_str().unwrap(), &dir.path().join("out")).unwrap();
        assert!(root.ends_with("proj-main"));
        assert_eq!(std::fs::read_to_string(root.join("data.csv")).unwrap(), "a,b\n1,2\n");
    }

    #[test]
    fn local_directory_passes_through() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(fetch_remote(dir.path().to_str().unwrap(), Path::new("/unused")).unwrap(), dir.path());
    }

    #[test]
    fn garbage_is_an_archive_error() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("x.tar.gz");
        std::fs::write(&f, b"not an archive").unwrap();
        assert!(matches!(fetch_remote(f.to_str().unwrap(), &dir.path().join("o")), Err(CorpusError::ArchiveError(_))));
    }

    fn serve_once(status: &'static str, body: Vec<u8>) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            let (mut s, _) = listener.accept().unwrap();
            let mut buf = [0u8; 4096];
            let _ = std::io::Read::read(&mut s, &mut buf);
            let head = format!("HTTP/1.1 {status}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n", body.len());
            s.write_all(head.as_bytes()).unwrap();
            s.write_all(&body).unwrap();
        });
        format!("http://{addr}/repo.tar.gz")
    }

    #[test]
    fn http_download() {
        let url = serve_once("200 OK", archive());
        let dir = tempfile::tempdir().unwrap();
        let root = fetch_remote(&url, dir.path()).unwrap();
        assert!(root.join("data.csv").exists());
    }

    #[test]
    fn http_error_status() {
        let url = serve_once("404 Not Found", Vec::new());
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(fetch_remote(&url, dir.path()), Err(CorpusError::NetworkError(_))));
    }
}
