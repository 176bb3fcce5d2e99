if __name__ == "__main__":
    import uvicorn

    from mathcrawl.config import settings

    uvicorn.run("mathcrawl.main:app", host=settings.host, port=settings.port, reload=True)
